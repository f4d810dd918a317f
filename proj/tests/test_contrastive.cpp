#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rebar/contrastive.hpp"
#include "rebar/errors.hpp"
#include "rebar/io.hpp"
#include "rebar/log.hpp"
#include "support.hpp"

using namespace rebar;
using testing::random_matrix;

namespace {

EncoderConfig tiny_encoder(Eigen::Index D = 1) {
    EncoderConfig c;
    c.in_channels = D;
    c.hidden_channels = 6;
    c.num_blocks = 2;
    c.embed_dim = 8;
    c.seed = 4;
    return c;
}

ContrastConfig tiny_contrast() {
    ContrastConfig c;
    c.n_cand = 4;
    c.batch_size = 4;
    c.max_epochs = 2;
    c.subseq_len = 32;
    c.learning_rate = 1e-3;
    c.seed = 2;
    return c;
}

const TimeSeriesDataset& small_data() {
    static const TimeSeriesDataset ds = [] {
        SyntheticConfig s;
        s.series_length = 600;
        s.seed = 6;
        return generate_synthetic(s);
    }();
    return ds;
}

FunctionMeasure euclid() {
    return FunctionMeasure("euclid", [](const Subsequence& a, const Subsequence& b, const Mask&) {
        return (a.values - b.values).squaredNorm();
    });
}

RowVector row(std::initializer_list<double> v) {
    RowVector r(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) r(i++) = x;
    return r;
}

struct QuietLog {
    LogSink prev = set_log_sink([](LogLevel, const std::string&) {});
    ~QuietLog() { set_log_sink(prev); }
};

}  // namespace

TEST_CASE("default encoder emits 320-dim embeddings deterministically") {
    Encoder e(EncoderConfig{});
    Matrix x = random_matrix(64, 1, 1);
    RowVector a = encode(x, e);
    CHECK(a.size() == 320);
    CHECK(a.allFinite());
    CHECK(encode(x, Encoder(EncoderConfig{})) == a);
}

TEST_CASE("pooled embedding is the column max of the features") {
    Encoder e(tiny_encoder(2));
    Matrix x = random_matrix(20, 2, 2);
    ad::Tape tape(false);
    Matrix f = e.features(tape, x).value();
    CHECK(f.rows() == 20);
    RowVector pooled = encode(x, e);
    CHECK((pooled - f.colwise().maxCoeff()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder gradients match finite differences") {
    Encoder e(tiny_encoder());
    Matrix x = random_matrix(10, 1, 3);
    Matrix w = random_matrix(1, 8, 4);
    auto value = [&](const Encoder& enc) {
        ad::Tape t(false);
        return (enc.forward(t, x).value().array() * w.array()).sum();
    };
    ad::Tape tape;
    auto out = e.forward(tape, x);
    tape.backward(out, w);
    Gradients g = e.params().zeros_like();
    tape.accumulate(g);
    Encoder probe = e;
    for (std::size_t i = 0; i < e.params().size(); ++i) {
        Matrix num = testing::numeric_grad(
            [&](const Matrix& v) {
                probe.params()[i].value = v;
                return value(probe);
            },
            e.params()[i].value, 1e-6);
        probe.params()[i].value = e.params()[i].value;
        CHECK(testing::rel_error(g[i], num) < 1e-5);
    }
}

TEST_CASE("encoder input errors") {
    Encoder e(tiny_encoder(2));
    CHECK_THROWS_AS(encode(random_matrix(10, 1, 5), e), SizeError);
    Matrix bad = random_matrix(10, 2, 6);
    bad(3, 1) = std::nan("");
    CHECK_THROWS_AS(encode(bad, e), ValidationError);
    auto c = tiny_encoder();
    c.kernel = 2;
    CHECK_THROWS_AS(Encoder{c}, ConfigError);
    c = tiny_encoder();
    c.embed_dim = 0;
    CHECK_THROWS_AS(Encoder{c}, ConfigError);
}

TEST_CASE("encoder checkpoint round trip") {
    testing::TempDir tmp("enc_ck");
    Encoder e(tiny_encoder());
    for (auto& p : e.params()) p.value = p.value.cast<float>().cast<double>();
    save_encoder(e, tmp.path / "e.ckpt");
    Encoder back = load_encoder(tmp.path / "e.ckpt");
    CHECK(back.config() == e.config());
    Matrix x = random_matrix(12, 1, 7);
    CHECK(encode(x, back) == encode(x, e));
    CHECK_THROWS_AS(load_encoder(tmp.path / "none.ckpt"), MissingArtifactError);
}

TEST_CASE("labeling picks the argmin with ties to the lowest index") {
    std::vector<double> d{0.4, 0.1, 0.9};
    auto l = label_from_distances(d);
    CHECK(l.positive_index == 1);
    CHECK(l.within_negative_indices == std::vector<int>{0, 2});

    std::vector<double> tie{0.3, 0.2, 0.2, 0.5};
    CHECK(label_from_distances(tie).positive_index == 1);

    std::vector<double> one{7.0};
    auto single = label_from_distances(one);
    CHECK(single.positive_index == 0);
    CHECK(single.within_negative_indices.empty());

    std::vector<double> none;
    CHECK_THROWS_AS(label_from_distances(none), ValidationError);
}

TEST_CASE("labeling follows a permutation of the candidates") {
    Subsequence anchor{random_matrix(16, 1, 8), "a", 0, 0};
    std::vector<Subsequence> cands;
    for (int i = 0; i < 6; ++i) cands.push_back({random_matrix(16, 1, 20 + static_cast<std::uint64_t>(i)), "a", i, 0});
    const auto m = euclid();
    const Mask mask = make_extended_mask_at(16, 4, 0);
    const int pos = label_candidates(anchor, cands, m, mask).positive_index;

    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::vector<Subsequence> shuffled;
    for (int p : perm) shuffled.push_back(cands[static_cast<std::size_t>(p)]);
    const int pos2 = label_candidates(anchor, shuffled, m, mask).positive_index;
    CHECK(perm[static_cast<std::size_t>(pos2)] == pos);

    std::vector<Subsequence> empty;
    CHECK_THROWS_AS(label_candidates(anchor, empty, m, mask), ValidationError);
}

TEST_CASE("nt-xent closed forms") {
    const RowVector a = row({1.0, 0.0});
    std::vector<RowVector> same(19, a);
    CHECK(nt_xent_within(a, a, same, 0.1) == doctest::Approx(std::log(20.0)).epsilon(1e-12));

    const RowVector pos = row({0.8, 0.6});
    const RowVector neg = row({0.2, std::sqrt(0.96)});
    std::vector<RowVector> negs{neg};
    CHECK(nt_xent_within(a, pos, negs, 0.5) == doctest::Approx(std::log1p(std::exp(-1.2))).epsilon(1e-12));
    CHECK(std::log1p(std::exp(-1.2)) == doctest::Approx(0.26328).epsilon(1e-4));

    std::vector<RowVector> twin{pos};
    CHECK(nt_xent_between(a, pos, twin, 0.3) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("nt-xent falls as the positive approaches the anchor") {
    const RowVector a = row({1.0, 0.0, 0.0});
    std::vector<RowVector> negs{row({0.0, 1.0, 0.0}), row({0.0, 0.0, 1.0})};
    double prev = INFINITY;
    for (double t = 0.0; t <= 1.0; t += 0.1) {
        const double l = nt_xent_within(a, row({t, 1.0 - t, 0.2}), negs, 0.2);
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("nt-xent is invariant to embedding scale") {
    const RowVector a = row({0.3, -1.2, 2.0});
    const RowVector p = row({0.1, -1.0, 1.5});
    std::vector<RowVector> negs{row({1.0, 1.0, 0.0}), row({-2.0, 0.5, 0.1})};
    std::vector<RowVector> scaled{negs[0] * 7.0, negs[1] * 0.01};
    CHECK(nt_xent_within(a * 3.0, p * 0.5, scaled, 0.1) == doctest::Approx(nt_xent_within(a, p, negs, 0.1)).epsilon(1e-12));
}

TEST_CASE("nt-xent errors") {
    const RowVector a = row({1.0, 2.0});
    std::vector<RowVector> negs{row({0.0, 1.0})};
    std::vector<RowVector> none;
    CHECK_THROWS_AS(nt_xent_within(RowVector::Zero(2), a, negs, 0.1), ValidationError);
    CHECK_THROWS_AS(nt_xent_between(a, a, none, 0.1), ValidationError);
    CHECK_THROWS_AS(nt_xent_within(a, a, negs, 0.0), ValidationError);
    std::vector<RowVector> wide{row({0.0, 1.0, 2.0})};
    CHECK_THROWS_AS(nt_xent_within(a, a, wide, 0.1), SizeError);
}

TEST_CASE("combined loss mixes the two terms") {
    CHECK(combined_loss(2.0, 4.0, 0.5) == 3.0);
    CHECK(combined_loss(2.0, std::nan(""), 0.0) == 2.0);
    CHECK(combined_loss(std::nan(""), 4.0, 1.0) == 4.0);
    CHECK(combined_loss(2.0, 4.0, 0.25) == doctest::Approx(2.5));
    CHECK_THROWS_AS(combined_loss(1.0, 1.0, -0.1), ValidationError);
    CHECK_THROWS_AS(combined_loss(1.0, 1.0, 1.5), ValidationError);
}

TEST_CASE("contrast config validation") {
    auto c = tiny_contrast();
    CHECK(c.mask_count() == 16);
    c.transient_mask_fraction = 0.001;
    CHECK(c.mask_count() == 1);

    c = tiny_contrast();
    c.alpha = 0.5;
    c.batch_size = 1;
    c.tau = 0.0;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("batch_size") != std::string::npos);
        CHECK(msg.find("tau") != std::string::npos);
    }
}

TEST_CASE("within-only training never evaluates between-series negatives") {
    QuietLog quiet;
    const auto m = euclid();
    auto r = train_contrastive(small_data(), m, Encoder(tiny_encoder()), tiny_contrast());
    CHECK(r.history.between_negative_evaluations == 0);
    REQUIRE(r.history.epochs.size() == 2);
    for (const auto& e : r.history.epochs) {
        CHECK(std::isnan(e.between_loss));
        CHECK(e.loss == doctest::Approx(e.within_loss));
        CHECK(std::isfinite(e.loss));
    }
}

TEST_CASE("between-series negatives come from the other series of each batch") {
    QuietLog quiet;
    const auto m = euclid();
    auto c = tiny_contrast();
    c.alpha = 0.5;
    c.max_epochs = 1;
    // 7 train series: batches of 4 and 3 give 4*3 + 3*2 terms
    auto r = train_contrastive(small_data(), m, Encoder(tiny_encoder()), c);
    CHECK(r.history.between_negative_evaluations == 18);
    // batches of 3, 3 and 1: the single joins its predecessor, 3*2 + 4*3
    c.batch_size = 3;
    r = train_contrastive(small_data(), m, Encoder(tiny_encoder()), c);
    CHECK(r.history.between_negative_evaluations == 18);
    const auto& e = r.history.epochs.front();
    CHECK(e.loss == doctest::Approx(0.5 * e.within_loss + 0.5 * e.between_loss));

    c.alpha = 1.0;
    r = train_contrastive(small_data(), m, Encoder(tiny_encoder()), c);
    CHECK(std::isnan(r.history.epochs.front().within_loss));
}

TEST_CASE("contrastive training is deterministic") {
    QuietLog quiet;
    const auto m = euclid();
    auto a = train_contrastive(small_data(), m, Encoder(tiny_encoder()), tiny_contrast());
    auto b = train_contrastive(small_data(), m, Encoder(tiny_encoder()), tiny_contrast());
    for (std::size_t i = 0; i < a.encoder.params().size(); ++i)
        CHECK(a.encoder.params()[i].value == b.encoder.params()[i].value);
    CHECK(a.history.epochs.back().loss == b.history.epochs.back().loss);
}

TEST_CASE("zero learning rate leaves the encoder unchanged") {
    QuietLog quiet;
    const auto m = euclid();
    auto c = tiny_contrast();
    c.learning_rate = 0.0;
    Encoder e(tiny_encoder());
    auto r = train_contrastive(small_data(), m, e, c);
    for (std::size_t i = 0; i < e.params().size(); ++i) CHECK(r.encoder.params()[i].value == e.params()[i].value);
}

TEST_CASE("contrastive training errors") {
    QuietLog quiet;
    const auto m = euclid();
    CHECK_THROWS_AS(train_contrastive(small_data(), m, Encoder(tiny_encoder(2)), tiny_contrast()), ConsistencyError);

    auto c = tiny_contrast();
    c.n_cand = 1000;
    CHECK_THROWS_AS(train_contrastive(small_data(), m, Encoder(tiny_encoder()), c), SizeError);

    TimeSeriesDataset one = small_data();
    for (auto& [id, split] : one.split_assignment) split = id == one.series[0].series_id ? Split::train : Split::test;
    c = tiny_contrast();
    c.alpha = 0.5;
    CHECK_THROWS_AS(train_contrastive(one, m, Encoder(tiny_encoder()), c), ConfigError);
    c.alpha = 0.0;
    CHECK_NOTHROW(train_contrastive(one, m, Encoder(tiny_encoder()), c));
}

TEST_CASE("contrastive csv writes NaN as empty") {
    testing::TempDir tmp("ccsv");
    ContrastHistory h;
    h.epochs.push_back({1, 0.5, 0.5, std::nan(""), 0.75});
    write_contrast_csv(h, tmp.path / "c.csv");
    CHECK(read_text(tmp.path / "c.csv") == "epoch,loss,within_loss,between_loss,positive_same_class\n1,0.5,0.5,,0.75\n");
}
