#include <doctest.h>

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rebar/cli.hpp"
#include "rebar/config.hpp"
#include "rebar/errors.hpp"
#include "rebar/io.hpp"
#include "support.hpp"

using namespace rebar;
namespace fs = std::filesystem;
using testing::TempDir;

namespace {

struct Capture {
    std::ostringstream out, err;
    std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
    std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
    ~Capture() {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
    }
};

struct EnvVar {
    std::string name;
    std::optional<std::string> old;
    EnvVar(std::string n, const std::string& value) : name(std::move(n)) {
        if (const char* v = std::getenv(name.c_str())) old = v;
        ::setenv(name.c_str(), value.c_str(), 1);
    }
    ~EnvVar() {
        if (old) ::setenv(name.c_str(), old->c_str(), 1);
        else ::unsetenv(name.c_str());
    }
};

const std::vector<std::string> kTiny = {
    "run.name=tiny",
    "synthetic.num_series=6",
    "synthetic.series_length=600",
    "rebar.embed_channels=8",
    "rebar.bottleneck_channels=4",
    "rebar.base_kernel=5",
    "rebar.num_heads=2",
    "rebar_train.subseq_len=32",
    "rebar_train.extended_mask_len=5",
    "rebar_train.batch_size=4",
    "rebar_train.max_epochs=1",
    "rebar_train.samples_per_epoch=8",
    "rebar_train.val_samples=4",
    "encoder.hidden_channels=4",
    "encoder.num_blocks=1",
    "encoder.embed_dim=4",
    "contrastive.n_cand=3",
    "contrastive.batch_size=4",
    "contrastive.max_epochs=1",
    "evaluation.trials=2",
    "evaluation.n_cand=3",
};

int run(const std::string& cmd, const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{cmd, "-o", out.string()};
    for (const auto& s : kTiny) {
        args.push_back("--set");
        args.push_back(s);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    Capture quiet;
    return run_cli(args);
}

}  // namespace

TEST_CASE("default configuration") {
    auto c = parse_run_config("");
    CHECK(c.name == "synthetic");
    CHECK(c.contrastive.tau == 0.1);
    CHECK(c.contrastive.alpha == 0.0);
    CHECK(c.contrastive.n_cand == 20);
    CHECK(c.rebar_train.extended_mask_len == 15);
    CHECK(c.rebar_train.subseq_len == 128);
    CHECK(c.encoder.embed_dim == 320);
    CHECK(c.evaluation.split == Split::test);
}

TEST_CASE("ini sections and overrides") {
    const std::string ini =
        "[run]\nseed = 7\nname = demo\n\n[contrastive]\ntau = 0.2\nalpha = 0.5\nbatch_size = 8\n\n"
        "[rebar_train]\nsubseq_len = 64\nmask_kind = transient\n";
    auto c = parse_run_config(ini, {"contrastive.tau=0.05", "evaluation.split=val"});
    CHECK(c.seed == 7);
    CHECK(c.name == "demo");
    CHECK(c.contrastive.tau == 0.05);
    CHECK(c.contrastive.alpha == 0.5);
    CHECK(c.contrastive.batch_size == 8);
    CHECK(c.contrastive.subseq_len == 64);
    CHECK(c.rebar_train.mask_kind == MaskKind::transient);
    CHECK(c.evaluation.split == Split::val);
}

TEST_CASE("component seeds derive from the run seed") {
    auto a = parse_run_config("[run]\nseed = 1\n");
    auto b = parse_run_config("[run]\nseed = 2\n");
    CHECK(a.synthetic.seed == 1);
    CHECK(a.rebar.seed != b.rebar.seed);
    CHECK(a.rebar.seed != a.encoder.seed);
    CHECK(a.contrastive.seed != a.rebar_train.seed);
}

TEST_CASE("every configuration problem is reported at once") {
    const std::string ini = "[contrastive]\ntau = -1\nbogus = 3\n[mystery]\nx = 1\n[rebar]\nnum_heads = abc\n";
    try {
        parse_run_config(ini, {"rebar_train.batch_size=0", "noequals"});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("tau") != std::string::npos);
        CHECK(msg.find("contrastive.bogus") != std::string::npos);
        CHECK(msg.find("[mystery]") != std::string::npos);
        CHECK(msg.find("rebar.num_heads") != std::string::npos);
        CHECK(msg.find("batch_size") != std::string::npos);
        CHECK(msg.find("noequals") != std::string::npos);
    }
}

TEST_CASE("config file errors") {
    CHECK_THROWS_AS(load_run_config("/nonexistent/run.ini"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[run\nseed=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("", {"run.name=a/b"}), ConfigError);
}

TEST_CASE("canonical ini round trips") {
    auto c = parse_run_config("", {"contrastive.alpha=0.25", "run.seed=9", "rebar.num_heads=2"});
    auto again = parse_run_config(c.to_ini());
    CHECK(again.to_ini() == c.to_ini());
    CHECK(again.contrastive.alpha == 0.25);
}

TEST_CASE("output root resolution") {
    auto c = parse_run_config("", {"run.name=exp"});
    {
        EnvVar env(kOutputRootEnv, "/tmp/rebar_root");
        CHECK(c.resolved_output_dir() == fs::path("/tmp/rebar_root/exp"));
        CHECK(c.resolved_dataset() == fs::path("/tmp/rebar_root/exp/dataset_exp"));
        c.output_dir = "/elsewhere";
        CHECK(c.resolved_output_dir() == fs::path("/elsewhere"));
    }
    c.output_dir.clear();
    EnvVar unset(kOutputRootEnv, "");
    CHECK(c.resolved_output_dir() == fs::path("runs/exp"));
    c.dataset = "/data/x";
    CHECK(c.resolved_dataset() == fs::path("/data/x"));
}

TEST_CASE("cli argument errors map to the config exit code") {
    Capture quiet;
    CHECK(run_cli({"frobnicate"}) == kExitConfig);
    CHECK(run_cli({"synth", "--set", "contrastive.tau=0"}) == kExitConfig);
    CHECK(run_cli({"validate-measure", "--measure", "dtw"}) == kExitConfig);
    CHECK(run_cli({"synth", "-c", "/nonexistent.ini"}) == kExitConfig);
}

TEST_CASE("cli pipeline end to end") {
    TempDir tmp("cli");
    const fs::path out = tmp.path / "run";

    CHECK(run("eval", out) == kExitMissing);  // no dataset yet
    REQUIRE(run("synth", out) == kExitOk);
    CHECK(fs::exists(out / "dataset_tiny" / "meta.json"));
    CHECK(fs::exists(out / "manifests" / "synth.json"));
    CHECK(run("synth", out) == kExitIo);
    CHECK(run("synth", out, {"--force"}) == kExitOk);

    CHECK(run("validate-measure", out, {"--measure", "rebar"}) == kExitMissing);
    CHECK(run("train-encoder", out) == kExitMissing);
    CHECK(run("eval", out) == kExitMissing);

    REQUIRE(run("train-measure", out) == kExitOk);
    CHECK(fs::exists(out / "rebar.ckpt"));
    const auto loss = read_text(out / "rebar_loss.csv");
    CHECK(loss.rfind("epoch,train_loss,val_loss\n0,,", 0) == 0);
    CHECK(run("train-measure", out) == kExitIo);

    REQUIRE(run("validate-measure", out, {"--measure", "rebar"}) == kExitOk);
    REQUIRE(run("validate-measure", out, {"--measure", "sliding-mse"}) == kExitOk);
    const std::string stem = "dataset_tiny_" + hex64(checksum_path(out / "rebar.ckpt")) + "_seed0";
    CHECK(fs::exists(out / "reports" / ("confusion_rebar_" + stem + ".csv")));
    CHECK(fs::exists(out / "reports" / ("tpr_rebar_" + stem + ".csv")));
    CHECK(fs::exists(out / "reports" / "confusion_sliding-mse_dataset_tiny_slidingmse_seed0.csv"));
    auto vj = nlohmann::json::parse(read_text(out / "reports" / ("validate_rebar_" + stem + ".json")));
    CHECK(vj["confusion"].size() == 3);

    REQUIRE(run("train-encoder", out) == kExitOk);
    REQUIRE(run("train-encoder", out, {"--measure", "sliding-mse"}) == kExitOk);
    CHECK(fs::exists(out / "encoder.ckpt"));
    CHECK(fs::exists(out / "encoder_sliding-mse.ckpt"));
    CHECK(read_text(out / "contrastive_loss.csv").rfind("epoch,loss,within_loss,between_loss,positive_same_class\n", 0) ==
          0);

    REQUIRE(run("eval", out) == kExitOk);
    REQUIRE(run("eval", out, {"--random-init"}) == kExitOk);
    const std::string estem = "dataset_tiny_" + hex64(checksum_path(out / "encoder.ckpt")) + "_seed0";
    auto pj = nlohmann::json::parse(read_text(out / "reports" / ("probe_" + estem + ".json")));
    CHECK(pj["accuracy"].get<double>() >= 0.0);
    CHECK(pj["accuracy"].get<double>() <= 1.0);
    CHECK(fs::exists(out / "reports" / ("cluster_" + estem + ".csv")));
    CHECK(fs::exists(out / "reports" / ("embeddings_test_" + estem + ".csv")));
    CHECK(fs::exists(out / "reports" / "probe_dataset_tiny_randominit_seed0.json"));

    auto manifest = nlohmann::json::parse(read_text(out / "manifests" / "eval.json"));
    CHECK(manifest["command"] == "eval");
    CHECK(manifest["seed"] == 0);
    CHECK(manifest["inputs"].size() == 2);
    CHECK(manifest["outputs"].size() == 5);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);

    // reports are reproducible byte for byte
    const auto probe_before = read_bytes(out / "reports" / ("probe_" + estem + ".json"));
    const auto emb_before = read_bytes(out / "reports" / ("embeddings_test_" + estem + ".csv"));
    REQUIRE(run("eval", out, {"--force"}) == kExitOk);
    CHECK(read_bytes(out / "reports" / ("probe_" + estem + ".json")) == probe_before);
    CHECK(read_bytes(out / "reports" / ("embeddings_test_" + estem + ".csv")) == emb_before);

    CHECK(run("eval", out, {"--encoder", (out / "rebar.ckpt").string(), "--force"}) == kExitFormat);
}

TEST_CASE("training twice from the same seed gives identical checkpoints") {
    TempDir a("cli_a"), b("cli_b");
    for (const auto& d : {a.path, b.path}) {
        REQUIRE(run("synth", d) == kExitOk);
        REQUIRE(run("train-measure", d) == kExitOk);
    }
    CHECK(read_bytes(a.path / "rebar.ckpt") == read_bytes(b.path / "rebar.ckpt"));
}

TEST_CASE("output root from the environment") {
    TempDir tmp("cli_env");
    EnvVar env(kOutputRootEnv, tmp.path.string());
    Capture quiet;
    std::vector<std::string> args{"synth"};
    for (const auto& s : kTiny) args.insert(args.end(), {"--set", s});
    REQUIRE(run_cli(args) == kExitOk);
    CHECK(fs::exists(tmp.path / "tiny" / "dataset_tiny" / "meta.json"));
}

TEST_CASE("csv import through the cli") {
    TempDir tmp("cli_csv");
    write_text_atomic(tmp.path / "walk 1.csv", "x,label\n0.5,0\n1.5,1\n2.5,1\n");
    write_text_atomic(tmp.path / "walk2.csv", "0.1,1\n0.2,0\n");
    Capture quiet;
    const int rc = run_cli({"import-csv", "-o", (tmp.path / "out").string(), "--set", "run.name=imp", "--csv",
                            (tmp.path / "walk 1.csv").string(), "--csv", (tmp.path / "walk2.csv").string(),
                            "--num-classes", "2", "--sample-rate", "10"});
    REQUIRE(rc == kExitOk);
    auto ds = load_dataset(tmp.path / "out" / "dataset_imp");
    REQUIRE(ds.series.size() == 2);
    CHECK(ds.series[0].series_id == "walk_1");
    CHECK(ds.series[0].sample_rate_hz == 10.0);

    write_text_atomic(tmp.path / "bad.csv", "0.1,7\n");
    CHECK(run_cli({"import-csv", "-o", (tmp.path / "out2").string(), "--csv", (tmp.path / "bad.csv").string(),
                   "--num-classes", "2"}) == kExitInvalid);
}
