#include "rebar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>

#include "rebar/errors.hpp"
#include "rebar/io.hpp"
#include "rebar/log.hpp"

namespace rebar {

double ConfusionMatrix::mean_diagonal() const {
    double s = 0.0;
    int n = 0;
    for (Eigen::Index c = 0; c < probs.rows(); ++c)
        if (!absent[static_cast<std::size_t>(c)]) {
            s += probs(c, c);
            ++n;
        }
    return n ? s / n : std::nan("");
}

namespace {

std::vector<const TimeSeries*> evaluated_series(const TimeSeriesDataset& dataset, std::optional<Split> split) {
    if (split) return dataset.in_split(*split);
    std::vector<const TimeSeries*> out;
    for (const auto& s : dataset.series) out.push_back(&s);
    return out;
}

std::uint64_t trial_stream(std::size_t series, int cls, int trial) {
    return (static_cast<std::uint64_t>(series) << 40) ^ (static_cast<std::uint64_t>(cls) << 24) ^
           static_cast<std::uint64_t>(trial);
}

}  // namespace

ConfusionMatrix nn_validation(const TimeSeriesDataset& dataset, const DistanceMeasure& measure, Eigen::Index T,
                              int trials, const MaskSpec& mask, Rng& rng, std::optional<Split> split) {
    if (trials < 1) throw ValidationError("nn_validation: trials must be >= 1");
    if (T < 1) throw SizeError("nn_validation: T must be >= 1");
    const int C = dataset.num_classes;
    Matrix counts = Matrix::Zero(C, C);
    ConfusionMatrix cm;
    cm.trials.assign(static_cast<std::size_t>(C), 0);
    cm.absent.assign(static_cast<std::size_t>(C), 0);
    const std::uint64_t base = rng();
    const auto series = evaluated_series(dataset, split);

    for (std::size_t si = 0; si < series.size(); ++si) {
        const TimeSeries& s = *series[si];
        if (s.length() < T) {
            cm.skipped += C;
            continue;
        }
        std::vector<std::int32_t> present;
        for (int c = 0; c < C; ++c)
            if (has_class_window(s, T, c)) present.push_back(c);
        cm.skipped += C - static_cast<long>(present.size());
        for (std::int32_t c : present) {
            for (int t = 0; t < trials; ++t) {
                Rng trng(mix_seed(base, trial_stream(si, c, t)));
                const Subsequence anchor = rand_segment(s, T, trng, c);
                std::vector<Subsequence> cands;
                for (std::int32_t k : present) cands.push_back(rand_segment(s, T, trng, k));
                const Mask m = make_mask(mask.kind, T, mask.count, trng);
                const auto d = measure.distances(anchor, cands, m);
                std::size_t best = 0;
                for (std::size_t j = 1; j < d.size(); ++j)
                    if (d[j] < d[best]) best = j;
                counts(c, present[best]) += 1.0;
                ++cm.trials[static_cast<std::size_t>(c)];
            }
        }
    }
    if (cm.skipped > 0) log_info("nn_validation: skipped " + std::to_string(cm.skipped) + " (series, class) pairs");
    cm.probs = Matrix::Zero(C, C);
    for (int c = 0; c < C; ++c) {
        if (cm.trials[static_cast<std::size_t>(c)] == 0) {
            cm.absent[static_cast<std::size_t>(c)] = 1;
            log_warning("nn_validation: class " + std::to_string(c) + " has no window of length " + std::to_string(T));
            continue;
        }
        cm.probs.row(c) = counts.row(c) / static_cast<double>(cm.trials[static_cast<std::size_t>(c)]);
    }
    return cm;
}

ConfusionMatrix nn_validation(const TimeSeriesDataset& dataset, const RebarModel& model, Eigen::Index T, int trials,
                              const MaskSpec& mask, Rng& rng, std::optional<Split> split) {
    return nn_validation(dataset, RebarMeasure(model), T, trials, mask, rng, split);
}

TprReport candidate_tpr(const TimeSeriesDataset& dataset, const DistanceMeasure& measure, Eigen::Index T, int n_cand,
                        int trials, const MaskSpec& mask, Rng& rng, std::optional<Split> split) {
    if (n_cand < 1) throw ValidationError("candidate_tpr: n_cand must be >= 1");
    if (trials < 1) throw ValidationError("candidate_tpr: trials must be >= 1");
    const int C = dataset.num_classes;
    TprReport r;
    r.trials.assign(static_cast<std::size_t>(C), 0);
    std::vector<long> hits(static_cast<std::size_t>(C), 0);
    const std::uint64_t base = rng();
    const auto series = evaluated_series(dataset, split);
    long skipped = 0;
    for (std::size_t si = 0; si < series.size(); ++si) {
        const TimeSeries& s = *series[si];
        if (s.length() < T) {
            skipped += C;
            continue;
        }
        for (int c = 0; c < C; ++c) {
            if (!has_class_window(s, T, c)) {
                ++skipped;
                continue;
            }
            for (int t = 0; t < trials; ++t) {
                Rng trng(mix_seed(base, trial_stream(si, c, t)));
                const Subsequence anchor = rand_segment(s, T, trng, c);
                std::vector<Subsequence> cands;
                for (int j = 0; j < n_cand; ++j) cands.push_back(rand_segment(s, T, trng));
                const Mask m = make_mask(mask.kind, T, mask.count, trng);
                const auto lab = label_candidates(anchor, cands, measure, m);
                if (cands[static_cast<std::size_t>(lab.positive_index)].label == c) ++hits[static_cast<std::size_t>(c)];
                ++r.trials[static_cast<std::size_t>(c)];
            }
        }
    }
    if (skipped > 0) log_info("candidate_tpr: skipped " + std::to_string(skipped) + " (series, class) pairs");
    long total = 0, total_hits = 0;
    for (int c = 0; c < C; ++c) {
        const auto n = r.trials[static_cast<std::size_t>(c)];
        r.per_class.push_back(n ? static_cast<double>(hits[static_cast<std::size_t>(c)]) / static_cast<double>(n)
                                : std::nan(""));
        total += n;
        total_hits += hits[static_cast<std::size_t>(c)];
    }
    r.overall = total ? static_cast<double>(total_hits) / static_cast<double>(total) : std::nan("");
    return r;
}

// ---- logistic regression -------------------------------------------------

namespace {

Matrix softmax_rows(const Matrix& z) {
    Matrix p = z;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double m = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - m).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

struct Objective {
    const Matrix& x;  // standardized
    const std::vector<int>& y;
    int C;
    double l2;

    double operator()(const Vector& theta, Vector& grad) const {
        const Eigen::Index d = x.cols();
        const Eigen::Map<const Matrix> W(theta.data(), d, C);
        const Eigen::Map<const RowVector> b(theta.data() + d * C, C);
        Matrix z = x * W;
        z.rowwise() += b;
        Matrix p = softmax_rows(z);
        const double n = static_cast<double>(x.rows());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const int yi = y[static_cast<std::size_t>(i)];
            const double m = z.row(i).maxCoeff();
            loss -= z(i, yi) - m - std::log((z.row(i).array() - m).exp().sum());
            p(i, yi) -= 1.0;
        }
        loss = loss / n + 0.5 * l2 * W.squaredNorm();
        grad.resize(theta.size());
        Eigen::Map<Matrix> gW(grad.data(), d, C);
        Eigen::Map<RowVector> gb(grad.data() + d * C, C);
        gW = x.transpose() * p / n + l2 * W;
        gb = p.colwise().sum() / n;
        return loss;
    }
};

}  // namespace

Matrix LogisticModel::predict_proba(const Matrix& x) const {
    if (x.cols() != weights.rows()) throw SizeError("predict_proba: feature dimension differs");
    Matrix xs = (x.rowwise() - mean).array().rowwise() / scale.array();
    Matrix z = xs * weights;
    z.rowwise() += bias;
    return softmax_rows(z);
}

LogisticModel fit_logistic(const Matrix& x, std::span<const int> labels, int num_classes, double l2, double grad_tol,
                           int max_iter) {
    if (x.rows() != static_cast<Eigen::Index>(labels.size())) throw SizeError("fit_logistic: label count differs");
    if (x.rows() == 0) throw ValidationError("fit_logistic: empty training set");
    std::vector<int> y(labels.begin(), labels.end());
    for (int v : y)
        if (v < 0 || v >= num_classes) throw ValidationError("fit_logistic: label out of range");
    if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); }))
        throw ValidationError("linear probe needs at least two classes in the training labels");

    LogisticModel m;
    m.mean = x.colwise().mean();
    m.scale = ((x.rowwise() - m.mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < m.scale.size(); ++j)
        if (!(m.scale(j) > 1e-12)) m.scale(j) = 1.0;
    const Matrix xs = (x.rowwise() - m.mean).array().rowwise() / m.scale.array();

    const Eigen::Index d = x.cols();
    const Objective f{xs, y, num_classes, l2};
    Vector theta = Vector::Zero(d * num_classes + num_classes);
    Vector g;
    double fx = f(theta, g);

    constexpr int kMemory = 10;
    std::deque<Vector> S, Y;
    std::deque<double> rho;
    int it = 0;
    bool converged = g.norm() <= grad_tol;
    while (!converged && it < max_iter) {
        // Two-loop recursion.
        Vector q = g;
        std::vector<double> a(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            a[static_cast<std::size_t>(i)] = rho[static_cast<std::size_t>(i)] * S[static_cast<std::size_t>(i)].dot(q);
            q -= a[static_cast<std::size_t>(i)] * Y[static_cast<std::size_t>(i)];
        }
        const double gamma = S.empty() ? 1.0 / std::max(1.0, g.norm()) : S.back().dot(Y.back()) / Y.back().squaredNorm();
        Vector r = gamma * q;
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * Y[i].dot(r);
            r += S[i] * (a[i] - beta);
        }
        Vector dir = -r;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            S.clear(), Y.clear(), rho.clear();
            dir = -g / std::max(1.0, g.norm());
            slope = g.dot(dir);
        }
        double step = 1.0;
        Vector theta_new, g_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            theta_new = theta + step * dir;
            f_new = f(theta_new, g_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++it;
        if (!accepted) break;
        Vector s = theta_new - theta, yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            S.push_back(std::move(s));
            Y.push_back(std::move(yv));
            rho.push_back(1.0 / sy);
            if (S.size() > kMemory) S.pop_front(), Y.pop_front(), rho.pop_front();
        }
        theta = std::move(theta_new);
        g = std::move(g_new);
        fx = f_new;
        converged = g.norm() <= grad_tol;
    }
    m.weights = Eigen::Map<const Matrix>(theta.data(), d, num_classes);
    m.bias = Eigen::Map<const RowVector>(theta.data() + d * num_classes, num_classes);
    m.iterations = it;
    m.converged = converged;
    if (!converged) log_info("logistic regression stopped after " + std::to_string(it) + " iterations, |g| = " +
                             std::to_string(g.norm()));
    return m;
}

double auroc(std::span<const double> scores, std::span<const int> positive) {
    if (scores.size() != positive.size()) throw SizeError("auroc: score and label counts differ");
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }
    double n_pos = 0, sum = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) {
            ++n_pos;
            sum += rank[i];
        }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("auroc needs both positive and negative labels");
    return (sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double average_precision(std::span<const double> scores, std::span<const int> positive) {
    if (scores.size() != positive.size()) throw SizeError("average_precision: score and label counts differ");
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double n_pos = 0;
    for (int p : positive) n_pos += p ? 1 : 0;
    if (n_pos == 0) throw ValidationError("average_precision needs at least one positive label");
    double tp = 0, seen = 0, ap = 0, prev_recall = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            tp += positive[idx[j]] ? 1 : 0;
            ++seen;
            ++j;
        }
        const double recall = tp / n_pos;
        ap += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
        i = j;
    }
    return ap;
}

ProbeReport linear_probe(const Matrix& train_embs, std::span<const int> train_labels, const Matrix& test_embs,
                         std::span<const int> test_labels) {
    if (test_embs.rows() != static_cast<Eigen::Index>(test_labels.size()))
        throw SizeError("linear_probe: test label count differs");
    if (test_embs.rows() == 0) throw ValidationError("linear_probe: empty test set");
    if (train_embs.cols() != test_embs.cols()) throw SizeError("linear_probe: embedding dimensions differ");
    int C = 0;
    for (int v : train_labels) C = std::max(C, v + 1);
    for (int v : test_labels) C = std::max(C, v + 1);
    const LogisticModel m = fit_logistic(train_embs, train_labels, C);
    const Matrix p = m.predict_proba(test_embs);

    ProbeReport r;
    r.iterations = m.iterations;
    r.converged = m.converged;
    double correct = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index arg;
        p.row(i).maxCoeff(&arg);
        if (arg == test_labels[static_cast<std::size_t>(i)]) ++correct;
    }
    r.accuracy = correct / static_cast<double>(p.rows());
    double sum_auc = 0, sum_ap = 0;
    int used = 0;
    for (int c = 0; c < C; ++c) {
        std::vector<double> s(static_cast<std::size_t>(p.rows()));
        std::vector<int> pos(s.size());
        int n_pos = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = p(static_cast<Eigen::Index>(i), c);
            pos[i] = test_labels[i] == c;
            n_pos += pos[i];
        }
        if (n_pos == 0 || n_pos == static_cast<int>(s.size())) continue;
        sum_auc += auroc(s, pos);
        sum_ap += average_precision(s, pos);
        ++used;
    }
    r.auroc_macro = used ? sum_auc / used : std::nan("");
    r.auprc_macro = used ? sum_ap / used : std::nan("");
    return r;
}

// ---- clustering ----------------------------------------------------------

std::vector<int> kmeans_cluster(const Matrix& x, int k, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    if (k < 1) throw ValidationError("kmeans: k must be >= 1");
    if (k > n) throw ValidationError("kmeans: k exceeds the number of points");
    {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < n; ++i) rows.emplace_back(x.row(i).data(), x.row(i).data() + x.cols());
        std::sort(rows.begin(), rows.end());
        const auto distinct = std::unique(rows.begin(), rows.end()) - rows.begin();
        if (distinct < k)
            log_warning("kmeans: only " + std::to_string(distinct) + " distinct points for k = " + std::to_string(k) +
                        "; some clusters are degenerate");
    }
    std::vector<int> best_assign;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 10; ++restart) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(restart)));
        Matrix centers(k, x.cols());
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        centers.row(0) = x.row(pick(rng));
        Vector d2(n);
        for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
        for (int c = 1; c < k; ++c) {
            Eigen::Index chosen = 0;
            const double total = d2.sum();
            if (total > 0) {
                double r = std::uniform_real_distribution<double>(0.0, total)(rng);
                chosen = n - 1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    r -= d2(i);
                    if (r < 0) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                chosen = pick(rng);
            }
            centers.row(c) = x.row(chosen);
            for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centers.row(c)).squaredNorm());
        }
        std::vector<int> assign(static_cast<std::size_t>(n), -1);
        double inertia = 0;
        for (int iter = 0; iter < 300; ++iter) {
            bool changed = false;
            inertia = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                int arg = 0;
                double bd = (x.row(i) - centers.row(0)).squaredNorm();
                for (int c = 1; c < k; ++c) {
                    const double dd = (x.row(i) - centers.row(c)).squaredNorm();
                    if (dd < bd) bd = dd, arg = c;
                }
                inertia += bd;
                if (assign[static_cast<std::size_t>(i)] != arg) changed = true, assign[static_cast<std::size_t>(i)] = arg;
            }
            if (!changed) break;
            Matrix sum = Matrix::Zero(k, x.cols());
            std::vector<int> count(static_cast<std::size_t>(k), 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                sum.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
                ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
            }
            for (int c = 0; c < k; ++c) {
                if (count[static_cast<std::size_t>(c)] > 0) {
                    centers.row(c) = sum.row(c) / count[static_cast<std::size_t>(c)];
                    continue;
                }
                // Empty cluster: move it onto the point farthest from its center.
                Eigen::Index far = 0;
                double fd = -1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double dd = (x.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
                    if (dd > fd) fd = dd, far = i;
                }
                centers.row(c) = x.row(far);
            }
        }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_assign = assign;
        }
    }
    return best_assign;
}

namespace {

struct Contingency {
    Matrix table;
    Vector rows, cols;
    double n = 0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw SizeError("label vectors differ in length");
    if (a.empty()) throw ValidationError("label vectors are empty");
    std::map<int, int> ia, ib;
    for (int v : a) ia.emplace(v, 0);
    for (int v : b) ib.emplace(v, 0);
    int k = 0;
    for (auto& [v, i] : ia) i = k++;
    k = 0;
    for (auto& [v, i] : ib) i = k++;
    Contingency c;
    c.table = Matrix::Zero(static_cast<Eigen::Index>(ia.size()), static_cast<Eigen::Index>(ib.size()));
    for (std::size_t i = 0; i < a.size(); ++i) c.table(ia[a[i]], ib[b[i]]) += 1.0;
    c.rows = c.table.rowwise().sum();
    c.cols = c.table.colwise().sum().transpose();
    c.n = static_cast<double>(a.size());
    return c;
}

double comb2(double v) { return v * (v - 1) / 2.0; }

double entropy(const Vector& counts, double n) {
    double h = 0;
    for (Eigen::Index i = 0; i < counts.size(); ++i)
        if (counts(i) > 0) h -= counts(i) / n * std::log(counts(i) / n);
    return h;
}

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    const auto c = contingency(a, b);
    const double index = c.table.unaryExpr([](double v) { return comb2(v); }).sum();
    const double sa = c.rows.unaryExpr([](double v) { return comb2(v); }).sum();
    const double sb = c.cols.unaryExpr([](double v) { return comb2(v); }).sum();
    const double total = comb2(c.n);
    const double expected = total > 0 ? sa * sb / total : 0.0;
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

double normalized_mutual_info(std::span<const int> a, std::span<const int> b) {
    const auto c = contingency(a, b);
    const double ha = entropy(c.rows, c.n), hb = entropy(c.cols, c.n);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    double mi = 0;
    for (Eigen::Index i = 0; i < c.table.rows(); ++i)
        for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
            const double nij = c.table(i, j);
            if (nij > 0) mi += nij / c.n * std::log(c.n * nij / (c.rows(i) * c.cols(j)));
        }
    return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

ClusterReport cluster_report(const Matrix& x, std::span<const int> labels, int k, std::uint64_t seed) {
    ClusterReport r;
    r.assignments = kmeans_cluster(x, k, seed);
    r.ari = adjusted_rand_index(labels, r.assignments);
    r.nmi = normalized_mutual_info(labels, r.assignments);
    return r;
}

std::vector<Subsequence> split_windows(const TimeSeriesDataset& dataset, Split split, Eigen::Index T) {
    std::vector<Subsequence> out;
    for (const auto* s : dataset.in_split(split)) {
        auto w = labeled_windows(*s, T);
        std::move(w.begin(), w.end(), std::back_inserter(out));
    }
    return out;
}

void export_embeddings(const Encoder& encoder, const TimeSeriesDataset& dataset, Split split, Eigen::Index T,
                       const std::filesystem::path& path) {
    const auto windows = split_windows(dataset, split, T);
    std::string out = "series_id,start_index,label";
    for (Eigen::Index j = 0; j < encoder.config().embed_dim; ++j) out += ",emb_" + std::to_string(j);
    out += "\n";
    for (const auto& w : windows) {
        const RowVector e = encode(w, encoder);
        out += w.source_series_id + "," + std::to_string(w.start_index) + "," + std::to_string(w.label);
        for (Eigen::Index j = 0; j < e.size(); ++j) out += "," + format_double(e(j));
        out += "\n";
    }
    write_text_atomic(path, out);
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    std::string out = "true_class";
    for (const auto& n : class_names) out += "," + n;
    out += ",trials\n";
    for (Eigen::Index c = 0; c < cm.probs.rows(); ++c) {
        out += class_names[static_cast<std::size_t>(c)];
        for (Eigen::Index k = 0; k < cm.probs.cols(); ++k)
            out += "," + (cm.absent[static_cast<std::size_t>(c)] ? std::string("absent") : format_double(cm.probs(c, k)));
        out += "," + std::to_string(cm.trials[static_cast<std::size_t>(c)]) + "\n";
    }
    return out;
}

std::string tpr_csv(const TprReport& r, const std::vector<std::string>& class_names) {
    std::string out = "class,tpr,trials\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c)
        out += class_names[c] + "," + (r.trials[c] ? format_double(r.per_class[c]) : std::string("absent")) + "," +
               std::to_string(r.trials[c]) + "\n";
    long total = 0;
    for (long t : r.trials) total += t;
    out += "overall," + format_double(r.overall) + "," + std::to_string(total) + "\n";
    return out;
}

}  // namespace rebar
