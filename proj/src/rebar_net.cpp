#include "rebar/rebar_net.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "rebar/checkpoint.hpp"
#include "rebar/errors.hpp"

namespace rebar {

using nlohmann::json;

namespace {
constexpr double kNormEps = 1e-5;
constexpr const char* kCheckpointKind = "rebar";
}  // namespace

int receptive_field(int kernel, int layers) {
    if (kernel < 1 || layers < 0) throw ConfigError("receptive_field: kernel must be >= 1 and layers >= 0");
    return 1 + (kernel - 1) * ((1 << layers) - 1);
}

void RebarConfig::validate() const {
    std::vector<std::string> bad;
    if (in_channels < 1) bad.push_back("in_channels must be >= 1");
    if (embed_channels < 1) bad.push_back("embed_channels must be >= 1");
    if (bottleneck_channels < 1) bad.push_back("bottleneck_channels must be >= 1");
    if (base_kernel < 1 || base_kernel % 2 == 0) bad.push_back("base_kernel must be odd and positive");
    if (num_layers < 1) bad.push_back("num_layers must be >= 1");
    if (num_layers > 20) bad.push_back("num_layers must be <= 20");
    if (num_heads < 1) bad.push_back("num_heads must be >= 1");
    else if (embed_channels % num_heads != 0) bad.push_back("embed_channels must be divisible by num_heads");
    if (!(revin_eps > 0.0)) bad.push_back("revin_eps must be positive");
    if (!bad.empty()) {
        std::string msg = "invalid rebar config:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw ConfigError(msg);
    }
}

void to_json(json& j, const RebarConfig& c) {
    j = json{{"in_channels", c.in_channels},
             {"embed_channels", c.embed_channels},
             {"bottleneck_channels", c.bottleneck_channels},
             {"base_kernel", c.base_kernel},
             {"num_layers", c.num_layers},
             {"num_heads", c.num_heads},
             {"softmax_scale", c.softmax_scale},
             {"revin_eps", c.revin_eps},
             {"linear_qkv", c.linear_qkv},
             {"seed", c.seed}};
}

void from_json(const json& j, RebarConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("embed_channels").get_to(c.embed_channels);
    j.at("bottleneck_channels").get_to(c.bottleneck_channels);
    j.at("base_kernel").get_to(c.base_kernel);
    j.at("num_layers").get_to(c.num_layers);
    j.at("num_heads").get_to(c.num_heads);
    j.at("softmax_scale").get_to(c.softmax_scale);
    j.at("revin_eps").get_to(c.revin_eps);
    j.at("linear_qkv").get_to(c.linear_qkv);
    j.at("seed").get_to(c.seed);
}

RevinStats revin_stats(const MaskedSubsequence& query, double eps) {
    const Matrix& q = query.values;
    if (query.mask.length() != q.rows()) throw SizeError("query mask length differs from query length");
    const Eigen::Index D = q.cols();
    RevinStats s{RowVector::Zero(D), RowVector::Ones(D), std::vector<std::uint8_t>(static_cast<std::size_t>(D), 0)};
    Eigen::Index n = 0;
    for (Eigen::Index t = 0; t < q.rows(); ++t)
        if (!query.mask.flags[static_cast<std::size_t>(t)]) {
            s.mean += q.row(t);
            ++n;
        }
    if (n == 0) {
        std::fill(s.fallback.begin(), s.fallback.end(), 1);
        return s;
    }
    s.mean /= static_cast<double>(n);
    RowVector var = RowVector::Zero(D);
    for (Eigen::Index t = 0; t < q.rows(); ++t)
        if (!query.mask.flags[static_cast<std::size_t>(t)]) var += (q.row(t) - s.mean).array().square().matrix();
    var /= static_cast<double>(n);
    s.std = var.array().sqrt().max(eps).matrix();
    return s;
}

RevinResult revin_normalize(const MaskedSubsequence& query, const Matrix& key, double eps) {
    if (key.cols() != query.values.cols()) throw SizeError("query and key channel counts differ");
    RevinResult r;
    r.stats = revin_stats(query, eps);
    r.query = (query.values.rowwise() - r.stats.mean).array().rowwise() / r.stats.std.array();
    for (Eigen::Index t = 0; t < r.query.rows(); ++t)
        if (query.mask.flags[static_cast<std::size_t>(t)]) r.query.row(t).setZero();
    r.key = (key.rowwise() - r.stats.mean).array().rowwise() / r.stats.std.array();
    return r;
}

Matrix revin_denormalize(const Matrix& x, const RevinStats& stats) {
    if (x.cols() != stats.mean.size()) throw SizeError("revin_denormalize: channel count differs from stats");
    return (x.array().rowwise() * stats.std.array()).rowwise() + stats.mean.array();
}

RebarModel::RebarModel(RebarConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(mix_seed(config_.seed, 0x4e7));
    build(rng);
}

RebarModel::StackIds RebarModel::build_stack(const std::string& prefix, Rng& rng) {
    const auto D = config_.in_channels;
    const auto E = config_.embed_channels;
    const auto B = config_.bottleneck_channels;
    const int K = config_.base_kernel;
    StackIds ids;
    ids.in_w = params_.add(prefix + ".in.weight", fan_in_uniform(D, E, D, rng));
    ids.in_b = params_.add(prefix + ".in.bias", Matrix::Zero(1, E));
    if (config_.linear_qkv) return ids;
    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string p = prefix + ".layer" + std::to_string(l);
        LayerIds li{};
        li.bottleneck_w = params_.add(p + ".bottleneck.weight", fan_in_uniform(E, B, E, rng));
        li.bottleneck_b = params_.add(p + ".bottleneck.bias", Matrix::Zero(1, B));
        li.conv_w = params_.add(p + ".conv.weight", fan_in_uniform(K * B, B, K * B, rng));
        li.conv_b = params_.add(p + ".conv.bias", Matrix::Zero(1, B));
        li.expand_w = params_.add(p + ".expand.weight", fan_in_uniform(B, E, B, rng));
        li.expand_b = params_.add(p + ".expand.bias", Matrix::Zero(1, E));
        ids.layers.push_back(li);
    }
    return ids;
}

void RebarModel::build(Rng& rng) {
    const auto E = config_.embed_channels;
    const auto D = config_.in_channels;
    q_ = build_stack("query", rng);
    k_ = build_stack("key", rng);
    v_ = build_stack("value", rng);
    auto head = [&](const std::string& name, Eigen::Index in, Eigen::Index out) {
        HeadIds h{};
        h.w = params_.add(name + ".weight", fan_in_uniform(in, out, in, rng));
        h.b = params_.add(name + ".bias", Matrix::Zero(1, out));
        return h;
    };
    proj_q_ = head("proj_query", E, E);
    proj_k_ = head("proj_key", E, E);
    proj_v_ = head("proj_value", E, E);
    aggregate_ = head("aggregate", E, D);
}

ad::Var RebarModel::project(ad::Tape& tape, ad::Var x, HeadIds ids) const {
    return ad::add_row(ad::matmul(x, param(tape, ids.w)), param(tape, ids.b));
}

ad::Var RebarModel::stack_forward(ad::Tape& tape, Stack which, ad::Var x, const Valid& valid) const {
    const StackIds& ids = which == Stack::query ? q_ : (which == Stack::key ? k_ : v_);
    auto in = ad::conv1d(x, valid, param(tape, ids.in_w), param(tape, ids.in_b), 1, 1, true);
    ad::Var h = in.out;
    Valid cur = std::move(in.valid);
    int dilation = 1;
    for (const auto& l : ids.layers) {
        ad::Var n = ad::instance_norm(h, cur, kNormEps);
        auto b = ad::conv1d(n, cur, param(tape, l.bottleneck_w), param(tape, l.bottleneck_b), 1, 1, true);
        ad::Var bg = ad::gelu(b.out);
        auto c = ad::conv1d(bg, b.valid, param(tape, l.conv_w), param(tape, l.conv_b), config_.base_kernel, dilation, true);
        ad::Var cg = ad::gelu(c.out);
        auto e = ad::conv1d(cg, c.valid, param(tape, l.expand_w), param(tape, l.expand_b), 1, 1, true);
        h = ad::add(h, e.out);
        cur = std::move(e.valid);
        dilation *= 2;
    }
    return ad::zero_rows(h, cur);
}

ad::Var RebarModel::value_path(ad::Tape& tape, std::span<const ad::Var> attention, const Matrix& key_normalized,
                               const RevinStats& stats) const {
    const auto H = config_.num_heads;
    if (static_cast<int>(attention.size()) != H)
        throw SizeError("expected " + std::to_string(H) + " attention maps, got " + std::to_string(attention.size()));
    if (key_normalized.cols() != config_.in_channels) throw SizeError("key channel count differs from model in_channels");
    const Valid all(static_cast<std::size_t>(key_normalized.rows()), 1);
    ad::Var v = stack_forward(tape, Stack::value, tape.constant(key_normalized), all);
    v = project(tape, v, proj_v_);
    const auto dh = config_.embed_channels / H;
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
        const auto& p = attention[static_cast<std::size_t>(h)];
        if (p.cols() != key_normalized.rows()) throw SizeError("attention columns differ from key length");
        heads.push_back(ad::matmul(p, ad::slice_cols(v, h * dh, dh)));
    }
    ad::Var merged = H == 1 ? heads.front() : ad::concat_cols(heads);
    ad::Var out = project(tape, merged, aggregate_);
    return ad::affine_columns(out, stats.std, stats.mean);
}

RebarModel::Graph RebarModel::forward(ad::Tape& tape, const MaskedSubsequence& query, const Matrix& key) const {
    if (query.values.cols() != config_.in_channels || key.cols() != config_.in_channels)
        throw SizeError("query/key have " + std::to_string(query.values.cols()) + "/" + std::to_string(key.cols()) +
                        " channels, model expects " + std::to_string(config_.in_channels));
    RevinResult rv = revin_normalize(query, key, config_.revin_eps);

    const Valid q_valid = query.mask.observed();
    const Valid k_valid(static_cast<std::size_t>(key.rows()), 1);
    ad::Var q = stack_forward(tape, Stack::query, tape.constant(rv.query), q_valid);
    ad::Var k = stack_forward(tape, Stack::key, tape.constant(rv.key), k_valid);
    q = project(tape, q, proj_q_);
    k = project(tape, k, proj_k_);

    const auto H = config_.num_heads;
    const auto dh = config_.embed_channels / H;
    const double s = config_.softmax_scale ? 1.0 / std::sqrt(static_cast<double>(config_.embed_channels)) : 1.0;
    Graph g;
    for (int h = 0; h < H; ++h) {
        ad::Var logits = ad::scale(ad::matmul_nt(ad::slice_cols(q, h * dh, dh), ad::slice_cols(k, h * dh, dh)), s);
        g.logits.push_back(logits);
        g.attention.push_back(ad::softmax_rows(logits));
    }
    g.reconstruction = value_path(tape, g.attention, rv.key, rv.stats);
    g.stats = std::move(rv.stats);
    return g;
}

Reconstruction rebar_forward(const MaskedSubsequence& query, const Matrix& key, const RebarModel& model) {
    ad::Tape tape(false);
    auto g = model.forward(tape, query, key);
    Reconstruction r;
    r.values = g.reconstruction.value();
    for (const auto& a : g.attention) r.attention.push_back(a.value());
    r.stats = std::move(g.stats);
    return r;
}

std::vector<Matrix> attention_logits(const MaskedSubsequence& query, const Matrix& key, const RebarModel& model) {
    ad::Tape tape(false);
    auto g = model.forward(tape, query, key);
    std::vector<Matrix> out;
    for (const auto& l : g.logits) out.push_back(l.value());
    return out;
}

Matrix reconstruct_from_weights(const AttentionMaps& p, const Matrix& key, const RevinStats& stats,
                                const RebarModel& model) {
    for (std::size_t h = 0; h < p.size(); ++h) {
        if ((p[h].array() < 0.0).any()) throw ValidationError("attention head " + std::to_string(h) + " has negative weights");
        for (Eigen::Index r = 0; r < p[h].rows(); ++r) {
            const double sum = p[h].row(r).sum();
            if (!(std::abs(sum - 1.0) <= 1e-3))
                throw ValidationError("attention head " + std::to_string(h) + " row " + std::to_string(r) + " sums to " +
                                      std::to_string(sum));
        }
    }
    if (key.cols() != stats.mean.size()) throw SizeError("key channel count differs from stats");
    const Matrix key_n = (key.rowwise() - stats.mean).array().rowwise() / stats.std.array();
    ad::Tape tape(false);
    std::vector<ad::Var> att;
    for (const auto& m : p) att.push_back(tape.constant(m));
    return model.value_path(tape, att, key_n, stats).value();
}

double rebar_distance(const Matrix& anchor, const Matrix& cand, const Mask& mask, const RebarModel& model) {
    if (anchor.rows() != cand.rows() || anchor.cols() != cand.cols())
        throw SizeError("anchor and candidate shapes differ");
    if (mask.count() == 0) throw ValidationError("rebar_distance needs at least one masked position");
    const auto masked = apply_mask(anchor, mask);
    const auto r = rebar_forward(masked, cand, model);
    double s = 0.0;
    for (Eigen::Index t = 0; t < anchor.rows(); ++t)
        if (mask.flags[static_cast<std::size_t>(t)]) s += (r.values.row(t) - anchor.row(t)).squaredNorm();
    return s / static_cast<double>(mask.count() * anchor.cols());
}

double rebar_distance(const Subsequence& anchor, const Subsequence& cand, const Mask& mask, const RebarModel& model) {
    return rebar_distance(anchor.values, cand.values, mask, model);
}

std::vector<double> rebar_distances(const Subsequence& anchor, std::span<const Subsequence> cands, const Mask& mask,
                                    const RebarModel& model) {
    std::vector<double> d;
    d.reserve(cands.size());
    for (const auto& c : cands) d.push_back(rebar_distance(anchor, c, mask, model));
    return d;
}

void save_rebar_model(const RebarModel& model, const std::filesystem::path& path) {
    write_checkpoint(path, kCheckpointKind, json(model.config()).dump(), model.params());
}

RebarModel load_rebar_model(const std::filesystem::path& path) {
    Checkpoint ck = read_checkpoint(path);
    if (ck.kind != kCheckpointKind)
        throw FormatError(path.string() + " holds a '" + ck.kind + "' checkpoint, expected '" + kCheckpointKind + "'");
    RebarConfig cfg;
    try {
        cfg = json::parse(ck.config_json).get<RebarConfig>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": bad config header: " + e.what());
    }
    RebarModel model(cfg);
    assign_parameters(model.params(), ck.params, path.string());
    return model;
}

RebarModel load_rebar_model(const std::filesystem::path& path, const RebarConfig& expected) {
    RebarModel m = load_rebar_model(path);
    if (!(m.config() == expected))
        throw ConsistencyError(path.string() + ": stored config " + json(m.config()).dump() + " differs from expected " +
                               json(expected).dump());
    return m;
}

}  // namespace rebar
