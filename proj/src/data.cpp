#include "rebar/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rebar/errors.hpp"
#include "rebar/io.hpp"

namespace rebar {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw FormatError("unknown split '" + s + "'");
}

Eigen::Index TimeSeriesDataset::channels() const {
    if (series.empty()) return 0;
    return series.front().channels();
}

const TimeSeries& TimeSeriesDataset::find(const std::string& series_id) const {
    for (const auto& s : series)
        if (s.series_id == series_id) return s;
    throw NotFoundError("no series '" + series_id + "' in dataset");
}

std::vector<const TimeSeries*> TimeSeriesDataset::in_split(Split split) const {
    std::vector<const TimeSeries*> out;
    for (const auto& s : series) {
        auto it = split_assignment.find(s.series_id);
        if (it != split_assignment.end() && it->second == split) out.push_back(&s);
    }
    return out;
}

void TimeSeriesDataset::validate() const {
    if (num_classes < 1) throw ValidationError("num_classes must be positive");
    if (static_cast<int>(class_names.size()) != num_classes)
        throw ConsistencyError("class_names has " + std::to_string(class_names.size()) + " entries, expected " +
                               std::to_string(num_classes));
    std::set<std::string> ids;
    for (const auto& s : series) {
        if (!ids.insert(s.series_id).second) throw ConsistencyError("duplicate series id '" + s.series_id + "'");
        if (s.channels() != series.front().channels())
            throw ConsistencyError("series '" + s.series_id + "' has " + std::to_string(s.channels()) +
                                   " channels, expected " + std::to_string(series.front().channels()));
        if (s.sample_rate_hz != series.front().sample_rate_hz)
            throw ConsistencyError("series '" + s.series_id + "' has a different sample rate");
        if (!(s.sample_rate_hz > 0.0)) throw ValidationError("series '" + s.series_id + "' has a non-positive sample rate");
        if (static_cast<Eigen::Index>(s.labels.size()) != s.length())
            throw ConsistencyError("series '" + s.series_id + "' label count differs from its length");
        if (!s.values.allFinite()) throw ValidationError("series '" + s.series_id + "' contains non-finite values");
        for (auto l : s.labels)
            if (l != kUnlabeled && (l < 0 || l >= num_classes))
                throw ValidationError("series '" + s.series_id + "' has label " + std::to_string(l) + " outside [0, " +
                                      std::to_string(num_classes) + ")");
        if (!split_assignment.contains(s.series_id))
            throw ConsistencyError("series '" + s.series_id + "' has no split assignment");
    }
    for (const auto& [id, split] : split_assignment)
        if (!ids.contains(id)) throw ConsistencyError("split assignment names unknown series '" + id + "'");
}

namespace {

void check_series_id(const std::string& id) {
    if (id.empty()) throw ValidationError("empty series id");
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
            throw ValidationError("series id '" + id + "' must use [A-Za-z0-9_.-] only");
}

}  // namespace

void save_dataset(const TimeSeriesDataset& dataset, const fs::path& dir) {
    dataset.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    json meta;
    meta["format"] = "rebar-dataset";
    meta["version"] = 1;
    meta["num_classes"] = dataset.num_classes;
    meta["class_names"] = dataset.class_names;
    meta["series"] = json::array();
    for (const auto& s : dataset.series) {
        check_series_id(s.series_id);
        const std::string value_file = s.series_id + ".f32";
        const std::string label_file = s.series_id + ".i32";

        std::vector<float> values(s.values.data(), s.values.data() + s.values.size());
        write_file_atomic(dir / value_file, encode_le(std::span<const float>(values)));
        write_file_atomic(dir / label_file, encode_le(std::span<const std::int32_t>(s.labels)));

        meta["series"].push_back({{"series_id", s.series_id},
                                  {"U", s.length()},
                                  {"D", s.channels()},
                                  {"sample_rate_hz", s.sample_rate_hz},
                                  {"value_file", value_file},
                                  {"label_file", label_file},
                                  {"split", to_string(dataset.split_assignment.at(s.series_id))}});
    }
    write_text_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

TimeSeriesDataset load_dataset(const fs::path& dir) {
    const fs::path meta_path = dir / "meta.json";
    if (!fs::exists(meta_path)) throw FormatError("missing metadata file " + meta_path.string());

    json meta;
    try {
        meta = json::parse(read_text(meta_path));
    } catch (const json::exception& e) {
        throw FormatError("corrupt metadata file " + meta_path.string() + ": " + e.what());
    }

    TimeSeriesDataset ds;
    try {
        ds.num_classes = meta.at("num_classes").get<int>();
        ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
        std::optional<Eigen::Index> channels;
        for (const auto& rec : meta.at("series")) {
            TimeSeries s;
            s.series_id = rec.at("series_id").get<std::string>();
            check_series_id(s.series_id);
            const auto U = rec.at("U").get<Eigen::Index>();
            const auto D = rec.at("D").get<Eigen::Index>();
            if (U < 0 || D < 1) throw FormatError("invalid shape for series '" + s.series_id + "' in " + meta_path.string());
            if (channels && *channels != D)
                throw ConsistencyError("series '" + s.series_id + "' has " + std::to_string(D) + " channels, expected " +
                                       std::to_string(*channels));
            channels = D;
            s.sample_rate_hz = rec.at("sample_rate_hz").get<double>();

            const fs::path vf = dir / rec.at("value_file").get<std::string>();
            const fs::path lf = dir / rec.at("label_file").get<std::string>();
            auto vbytes = read_bytes(vf);
            auto lbytes = read_bytes(lf);
            const auto n = static_cast<std::size_t>(U * D);
            if (vbytes.size() != n * 4)
                throw FormatError("value file " + vf.string() + " has " + std::to_string(vbytes.size()) +
                                  " bytes, expected " + std::to_string(n * 4));
            if (lbytes.size() != static_cast<std::size_t>(U) * 4)
                throw FormatError("label file " + lf.string() + " has " + std::to_string(lbytes.size()) +
                                  " bytes, expected " + std::to_string(U * 4));
            auto values = decode_le<float>(vbytes);
            s.values = Eigen::Map<const FloatMatrix>(values.data(), U, D);
            s.labels = decode_le<std::int32_t>(lbytes);
            ds.split_assignment[s.series_id] = parse_split(rec.at("split").get<std::string>());
            ds.series.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError("corrupt metadata file " + meta_path.string() + ": " + e.what());
    }
    ds.validate();
    return ds;
}

std::map<std::string, Split> assign_splits(const std::vector<std::string>& series_ids, std::uint64_t seed) {
    std::vector<std::string> ids = series_ids;
    Rng rng(mix_seed(seed, 0x5b117));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = ids.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const auto n_val = (n - n_train) / 2;
    std::map<std::string, Split> out;
    for (std::size_t i = 0; i < n; ++i)
        out[ids[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    return out;
}

std::vector<std::vector<Matrix>> synthetic_templates(const SyntheticConfig& cfg) {
    std::vector<std::vector<Matrix>> templates(static_cast<std::size_t>(cfg.num_classes));
    const auto L = cfg.motif_length;
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (int m = 0; m < cfg.motifs_per_class; ++m) {
            Rng rng(mix_seed(cfg.seed, 0x7e30 + static_cast<std::uint64_t>(c) * 1000 + static_cast<std::uint64_t>(m)));
            std::uniform_real_distribution<double> freq(0.5, 3.0), amp(0.5, 1.5), phase(0.0, 2.0 * std::numbers::pi);
            Matrix tpl = Matrix::Zero(L, cfg.channels);
            for (Eigen::Index d = 0; d < cfg.channels; ++d) {
                for (int k = 0; k < 3; ++k) {
                    const double f = freq(rng), a = amp(rng), p = phase(rng);
                    for (Eigen::Index t = 0; t < L; ++t) {
                        const double u = L > 1 ? static_cast<double>(t) / static_cast<double>(L - 1) : 0.0;
                        tpl(t, d) += a * std::sin(2.0 * std::numbers::pi * f * u + p);
                    }
                }
                for (Eigen::Index t = 0; t < L; ++t) {
                    const double u = L > 1 ? static_cast<double>(t) / static_cast<double>(L - 1) : 0.5;
                    tpl(t, d) *= std::pow(std::sin(std::numbers::pi * u), 2);
                }
            }
            templates[static_cast<std::size_t>(c)].push_back(std::move(tpl));
        }
    }
    return templates;
}

TimeSeriesDataset generate_synthetic(const SyntheticConfig& cfg) {
    std::vector<std::string> problems;
    if (cfg.num_classes < 2) problems.push_back("num_classes must be >= 2");
    if (cfg.num_series < 1) problems.push_back("num_series must be >= 1");
    if (cfg.series_length < 1) problems.push_back("series_length must be positive");
    if (cfg.channels < 1) problems.push_back("channels must be positive");
    if (cfg.motifs_per_class < 1) problems.push_back("motifs_per_class must be >= 1");
    if (cfg.motif_length < 1) problems.push_back("motif_length must be positive");
    if (cfg.segment_length_range.first > cfg.segment_length_range.second)
        problems.push_back("segment_length_range min exceeds max");
    if (cfg.segment_length_range.first < cfg.motif_length)
        problems.push_back("segment_length_range min is shorter than motif_length");
    if (!(cfg.noise_std >= 0.0)) problems.push_back("noise_std must be >= 0");
    if (!(cfg.sample_rate_hz > 0.0)) problems.push_back("sample_rate_hz must be positive");
    if (!problems.empty()) {
        std::string msg = "invalid synthetic config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ConfigError(msg);
    }

    const auto templates = synthetic_templates(cfg);
    const auto L = cfg.motif_length;
    const auto U = cfg.series_length;

    TimeSeriesDataset ds;
    ds.num_classes = cfg.num_classes;
    for (int c = 0; c < cfg.num_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));

    std::vector<std::string> ids;
    for (int i = 0; i < cfg.num_series; ++i) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i) + 1));
        std::uniform_int_distribution<Eigen::Index> seg_len(cfg.segment_length_range.first, cfg.segment_length_range.second);
        std::uniform_int_distribution<Eigen::Index> gap_dist(0, L / 2);
        std::uniform_int_distribution<int> pick_motif(0, cfg.motifs_per_class - 1);
        std::normal_distribution<double> noise(0.0, 1.0);

        TimeSeries s;
        char id[32];
        std::snprintf(id, sizeof id, "syn%03d", i);
        s.series_id = id;
        s.sample_rate_hz = cfg.sample_rate_hz;
        Matrix values = Matrix::Zero(U, cfg.channels);
        s.labels.assign(static_cast<std::size_t>(U), kUnlabeled);

        // Classes cycle through shuffled permutations so every class recurs.
        std::vector<int> order;
        std::size_t next = 0;
        int prev = -1;
        Eigen::Index pos = 0;
        while (pos < U) {
            if (next == order.size()) {
                order.resize(static_cast<std::size_t>(cfg.num_classes));
                for (int c = 0; c < cfg.num_classes; ++c) order[static_cast<std::size_t>(c)] = c;
                std::shuffle(order.begin(), order.end(), rng);
                if (order.front() == prev) std::swap(order.front(), order.back());
                next = 0;
            }
            const int cls = order[next++];
            const Eigen::Index len = std::min(seg_len(rng), U - pos);
            if (len < cfg.segment_length_range.first) break;  // short tail stays unlabeled
            for (Eigen::Index t = pos; t < pos + len; ++t) s.labels[static_cast<std::size_t>(t)] = cls;
            Eigen::Index cursor = 0;
            while (true) {
                const Eigen::Index gap = gap_dist(rng);
                if (cursor + gap + L > len) break;
                const auto& tpl = templates[static_cast<std::size_t>(cls)][static_cast<std::size_t>(pick_motif(rng))];
                values.middleRows(pos + cursor + gap, L) = tpl;
                cursor += gap + L;
            }
            pos += len;
            prev = cls;
        }
        if (cfg.noise_std > 0.0)
            for (Eigen::Index k = 0; k < values.size(); ++k) values.data()[k] += cfg.noise_std * noise(rng);
        s.values = values.cast<float>();
        ids.push_back(s.series_id);
        ds.series.push_back(std::move(s));
    }
    ds.split_assignment = assign_splits(ids, cfg.seed);
    ds.validate();
    return ds;
}

TimeSeries import_csv_series(const fs::path& csv, std::string series_id, double sample_rate_hz) {
    std::istringstream in(read_text(csv));
    std::string line;
    std::vector<std::vector<double>> rows;
    std::vector<std::int32_t> labels;
    std::size_t width = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) {
            const auto b = f.find_first_not_of(" \t");
            const auto e = f.find_last_not_of(" \t");
            fields.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
        }
        auto parse_double = [&](const std::string& s, double& out) {
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            return ec == std::errc() && p == s.data() + s.size();
        };
        double probe = 0.0;
        if (rows.empty() && labels.empty() && !fields.empty() && !parse_double(fields[0], probe)) continue;  // header
        if (fields.size() < 2)
            throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": need at least one value column and a label");
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                              " columns, found " + std::to_string(fields.size()));
        std::vector<double> row(width - 1);
        for (std::size_t c = 0; c + 1 < width; ++c)
            if (!parse_double(fields[c], row[c]))
                throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": bad number '" + fields[c] + "'");
        std::int32_t label = 0;
        const auto& lf = fields.back();
        auto [p, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (ec != std::errc() || p != lf.data() + lf.size())
            throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": bad label '" + lf + "'");
        rows.push_back(std::move(row));
        labels.push_back(label);
    }
    TimeSeries s;
    s.series_id = std::move(series_id);
    s.sample_rate_hz = sample_rate_hz;
    s.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width == 0 ? 0 : width - 1));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<float>(rows[r][c]);
    if (!s.values.allFinite()) throw ValidationError(csv.string() + ": non-finite values");
    s.labels = std::move(labels);
    return s;
}

std::int32_t uniform_label(const TimeSeries& series, Eigen::Index start, Eigen::Index T) {
    const auto first = series.labels[static_cast<std::size_t>(start)];
    if (first == kUnlabeled) return kUnlabeled;
    for (Eigen::Index t = start + 1; t < start + T; ++t)
        if (series.labels[static_cast<std::size_t>(t)] != first) return kUnlabeled;
    return first;
}

Subsequence extract(const TimeSeries& series, Eigen::Index start, Eigen::Index T) {
    if (start < 0 || T < 1 || start + T > series.length())
        throw SizeError("window [" + std::to_string(start) + ", " + std::to_string(start + T) + ") outside series '" +
                        series.series_id + "' of length " + std::to_string(series.length()));
    Subsequence s;
    s.values = series.values.middleRows(start, T).cast<double>();
    s.source_series_id = series.series_id;
    s.start_index = start;
    s.label = uniform_label(series, start, T);
    return s;
}

namespace {

std::vector<Eigen::Index> class_window_starts(const TimeSeries& series, Eigen::Index T, std::int32_t cls) {
    std::vector<Eigen::Index> starts;
    Eigen::Index run = 0;
    for (Eigen::Index t = 0; t < series.length(); ++t) {
        run = series.labels[static_cast<std::size_t>(t)] == cls ? run + 1 : 0;
        if (run >= T) starts.push_back(t - T + 1);
    }
    return starts;
}

void check_window_length(const TimeSeries& series, Eigen::Index T) {
    if (T < 1) throw SizeError("subsequence length must be positive");
    if (T > series.length())
        throw SizeError("subsequence length " + std::to_string(T) + " exceeds series '" + series.series_id +
                        "' length " + std::to_string(series.length()));
}

}  // namespace

bool has_class_window(const TimeSeries& series, Eigen::Index T, std::int32_t cls) {
    if (T < 1 || T > series.length()) return false;
    Eigen::Index run = 0;
    for (Eigen::Index t = 0; t < series.length(); ++t) {
        run = series.labels[static_cast<std::size_t>(t)] == cls ? run + 1 : 0;
        if (run >= T) return true;
    }
    return false;
}

Subsequence rand_segment(const TimeSeries& series, Eigen::Index T, Rng& rng, std::optional<std::int32_t> class_filter) {
    check_window_length(series, T);
    std::uniform_int_distribution<Eigen::Index> start_dist(0, series.length() - T);
    if (!class_filter) return extract(series, start_dist(rng), T);

    constexpr int kRejectionAttempts = 1000;
    for (int attempt = 0; attempt < kRejectionAttempts; ++attempt) {
        const Eigen::Index s = start_dist(rng);
        if (uniform_label(series, s, T) == *class_filter) return extract(series, s, T);
    }
    const auto starts = class_window_starts(series, T, *class_filter);
    if (starts.empty())
        throw NotFoundError("series '" + series.series_id + "' has no length-" + std::to_string(T) + " window of class " +
                            std::to_string(*class_filter));
    std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
    return extract(series, starts[pick(rng)], T);
}

AnchorAndCandidates sample_anchor_and_candidates(const TimeSeries& series, Eigen::Index T, int n_cand, Rng& rng) {
    check_window_length(series, T);
    if (n_cand < 1) throw ValidationError("n_cand must be >= 1");
    const Eigen::Index positions = series.length() - T + 1;
    if (n_cand > positions)
        throw SizeError("cannot draw " + std::to_string(n_cand) + " distinct candidates from " + std::to_string(positions) +
                        " window positions");
    std::uniform_int_distribution<Eigen::Index> start_dist(0, positions - 1);
    AnchorAndCandidates out;
    out.anchor = extract(series, start_dist(rng), T);
    std::set<Eigen::Index> used;
    while (static_cast<int>(out.candidates.size()) < n_cand) {
        const Eigen::Index s = start_dist(rng);
        if (!used.insert(s).second) continue;
        out.candidates.push_back(extract(series, s, T));
    }
    return out;
}

std::vector<Subsequence> labeled_windows(const TimeSeries& series, Eigen::Index T) {
    std::vector<Subsequence> out;
    if (T < 1) throw SizeError("subsequence length must be positive");
    for (Eigen::Index s = 0; s + T <= series.length(); s += T)
        if (uniform_label(series, s, T) != kUnlabeled) out.push_back(extract(series, s, T));
    return out;
}

}  // namespace rebar
