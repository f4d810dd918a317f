#include "rebar/cli.hpp"

#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rebar/checkpoint.hpp"
#include "rebar/config.hpp"
#include "rebar/errors.hpp"
#include "rebar/evaluation.hpp"
#include "rebar/io.hpp"
#include "rebar/log.hpp"

namespace rebar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string output_dir;
    bool force = false;
    bool verbose = false;
};

struct Paths {
    fs::path out, dataset, rebar_ckpt, rebar_loss, encoder_ckpt, contrast_loss, reports, manifests;
};

Paths paths_for(const RunConfig& c, const std::string& encoder_suffix = "") {
    Paths p;
    p.out = c.resolved_output_dir();
    p.dataset = c.resolved_dataset();
    p.rebar_ckpt = p.out / "rebar.ckpt";
    p.rebar_loss = p.out / "rebar_loss.csv";
    p.encoder_ckpt = p.out / ("encoder" + encoder_suffix + ".ckpt");
    p.contrast_loss = p.out / ("contrastive_loss" + encoder_suffix + ".csv");
    p.reports = p.out / "reports";
    p.manifests = p.out / "manifests";
    return p;
}

RunConfig load_config(const Common& o) {
    RunConfig c = o.config.empty() ? parse_run_config("", o.sets) : load_run_config(o.config, o.sets);
    if (!o.output_dir.empty()) c.output_dir = o.output_dir;
    return c;
}

void ensure_writable(const std::vector<fs::path>& outputs, bool force) {
    std::vector<std::string> existing;
    for (const auto& p : outputs)
        if (fs::exists(p)) existing.push_back(p.string());
    if (existing.empty() || force) return;
    std::string msg = "refusing to overwrite existing output (pass --force):";
    for (const auto& e : existing) msg += "\n  " + e;
    throw IoError(msg);
}

void require(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw MissingArtifactError(what + " not found: " + p.string());
}

TimeSeriesDataset open_dataset(const fs::path& dir) {
    require(dir, "dataset");
    return load_dataset(dir);
}

std::string stem_for(const fs::path& dataset, const std::string& model_checksum, std::uint64_t seed) {
    return dataset.filename().string() + "_" + model_checksum + "_seed" + std::to_string(seed);
}

void write_manifest(const Paths& p, const std::string& command, const RunConfig& c,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
    json m;
    m["command"] = command;
    m["tool_version"] = kToolVersion;
    const std::string ini = c.to_ini();
    m["config_hash"] = hex64(fnv1a64(ini));
    m["config"] = ini;
    m["seed"] = c.seed;
    json in = json::object(), out = json::object();
    for (const auto& f : inputs) in[f.string()] = hex64(checksum_path(f));
    for (const auto& f : outputs) out[f.string()] = hex64(checksum_path(f));
    m["inputs"] = in;
    m["outputs"] = out;
    m["versions"] = {{"rebar", kToolVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__}};
    fs::create_directories(p.manifests);
    write_text_atomic(p.manifests / (command + ".json"), m.dump(2) + "\n");
}

fs::path manifest_path(const Paths& p, const std::string& command) { return p.manifests / (command + ".json"); }

RebarConfig model_config(const RunConfig& c, const TimeSeriesDataset& ds) {
    RebarConfig r = c.rebar;
    r.in_channels = ds.channels();
    r.linear_qkv = c.rebar_train.ablation_linear_qkv;
    return r;
}

EncoderConfig encoder_config(const RunConfig& c, const TimeSeriesDataset& ds) {
    EncoderConfig e = c.encoder;
    e.in_channels = ds.channels();
    return e;
}

MaskSpec eval_mask(const RunConfig& c) {
    const auto T = c.rebar_train.subseq_len;
    auto n = static_cast<Eigen::Index>(std::llround(c.evaluation.transient_mask_fraction * static_cast<double>(T)));
    return {MaskKind::transient, std::clamp<Eigen::Index>(n, 1, T)};
}

// ---- commands ------------------------------------------------------------

void cmd_synth(const Common& o) {
    const RunConfig c = load_config(o);
    const Paths p = paths_for(c);
    ensure_writable({p.dataset, manifest_path(p, "synth")}, o.force);
    const auto ds = generate_synthetic(c.synthetic);
    if (o.force && fs::exists(p.dataset)) fs::remove_all(p.dataset);
    save_dataset(ds, p.dataset);
    write_manifest(p, "synth", c, {}, {p.dataset});
    std::cout << "wrote " << ds.series.size() << " series to " << p.dataset.string() << "\n";
}

void cmd_import_csv(const Common& o, const std::vector<std::string>& csvs, int num_classes, double rate) {
    const RunConfig c = load_config(o);
    const Paths p = paths_for(c);
    if (csvs.empty()) throw ConfigError("import-csv needs at least one --csv file");
    if (num_classes < 1) throw ConfigError("--num-classes must be >= 1");
    ensure_writable({p.dataset, manifest_path(p, "import-csv")}, o.force);
    TimeSeriesDataset ds;
    ds.num_classes = num_classes;
    for (int k = 0; k < num_classes; ++k) ds.class_names.push_back("class" + std::to_string(k));
    std::vector<std::string> ids;
    std::vector<fs::path> inputs;
    for (const auto& f : csvs) {
        require(f, "csv file");
        std::string id = fs::path(f).stem().string();
        for (auto& ch : id)
            if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-' && ch != '.') ch = '_';
        ds.series.push_back(import_csv_series(f, id, rate));
        ids.push_back(id);
        inputs.emplace_back(f);
    }
    ds.split_assignment = assign_splits(ids, c.seed);
    if (o.force && fs::exists(p.dataset)) fs::remove_all(p.dataset);
    save_dataset(ds, p.dataset);
    write_manifest(p, "import-csv", c, inputs, {p.dataset});
    std::cout << "imported " << ds.series.size() << " series into " << p.dataset.string() << "\n";
}

void cmd_train_measure(const Common& o) {
    const RunConfig c = load_config(o);
    const Paths p = paths_for(c);
    const auto ds = open_dataset(p.dataset);
    ensure_writable({p.rebar_ckpt, p.rebar_loss, manifest_path(p, "train-measure")}, o.force);
    RebarModel model(model_config(c, ds));
    auto r = train_rebar(ds, std::move(model), c.rebar_train, [](const EpochRecord& e) {
        log_info("epoch " + std::to_string(e.epoch) + " train " + format_double(e.train_loss) + " val " +
                 format_double(e.val_loss));
    });
    fs::create_directories(p.out);
    save_rebar_model(r.model, p.rebar_ckpt);
    write_loss_csv(r.history, p.rebar_loss);
    write_manifest(p, "train-measure", c, {p.dataset}, {p.rebar_ckpt, p.rebar_loss});
    std::cout << "best val loss " << format_double(r.history.best_val_loss) << " at epoch " << r.history.best_epoch
              << "; wrote " << p.rebar_ckpt.string() << "\n";
}

void cmd_validate_measure(const Common& o, const std::string& measure_name, const std::string& checkpoint) {
    const RunConfig c = load_config(o);
    const Paths p = paths_for(c);
    const auto ds = open_dataset(p.dataset);
    std::optional<RebarModel> model;
    std::unique_ptr<DistanceMeasure> measure;
    std::string checksum;
    std::vector<fs::path> inputs{p.dataset};
    if (measure_name == "rebar") {
        const fs::path ck = checkpoint.empty() ? p.rebar_ckpt : fs::path(checkpoint);
        require(ck, "rebar checkpoint");
        model.emplace(load_rebar_model(ck));
        measure = std::make_unique<RebarMeasure>(*model);
        checksum = hex64(checksum_path(ck));
        inputs.push_back(ck);
    } else if (measure_name == "sliding-mse") {
        measure = std::make_unique<SlidingMseMeasure>(&ds);
        checksum = "slidingmse";
    } else {
        throw ConfigError("unknown measure '" + measure_name + "' (expected rebar or sliding-mse)");
    }
    const std::string stem = stem_for(p.dataset, checksum, c.seed);
    const fs::path conf_csv = p.reports / ("confusion_" + measure_name + "_" + stem + ".csv");
    const fs::path tpr_path = p.reports / ("tpr_" + measure_name + "_" + stem + ".csv");
    const fs::path json_path = p.reports / ("validate_" + measure_name + "_" + stem + ".json");
    const std::string mname = "validate-measure-" + measure_name;
    ensure_writable({conf_csv, tpr_path, json_path, manifest_path(p, mname)}, o.force);

    const auto T = c.rebar_train.subseq_len;
    const MaskSpec mask = eval_mask(c);
    Rng rng(mix_seed(c.seed, 0xe1));
    const auto cm = nn_validation(ds, *measure, T, c.evaluation.trials, mask, rng, c.evaluation.split);
    Rng rng2(mix_seed(c.seed, 0xe2));
    const auto tpr = candidate_tpr(ds, *measure, T, c.evaluation.n_cand, c.evaluation.trials, mask, rng2, c.evaluation.split);

    fs::create_directories(p.reports);
    write_text_atomic(conf_csv, confusion_csv(cm, ds.class_names));
    write_text_atomic(tpr_path, tpr_csv(tpr, ds.class_names));
    json j;
    j["measure"] = measure_name;
    j["split"] = to_string(c.evaluation.split);
    j["mean_diagonal"] = cm.mean_diagonal();
    json rows = json::array();
    for (Eigen::Index r = 0; r < cm.probs.rows(); ++r) {
        std::vector<double> row(cm.probs.row(r).data(), cm.probs.row(r).data() + cm.probs.cols());
        rows.push_back({{"class", ds.class_names[static_cast<std::size_t>(r)]},
                        {"absent", cm.absent[static_cast<std::size_t>(r)] != 0},
                        {"trials", cm.trials[static_cast<std::size_t>(r)]},
                        {"probs", row}});
    }
    j["confusion"] = rows;
    j["skipped_series_classes"] = cm.skipped;
    json tj = json::array();
    for (std::size_t k = 0; k < tpr.per_class.size(); ++k)
        tj.push_back({{"class", ds.class_names[k]},
                      {"tpr", tpr.trials[k] ? json(tpr.per_class[k]) : json(nullptr)},
                      {"trials", tpr.trials[k]}});
    j["tpr"] = {{"per_class", tj}, {"overall", tpr.overall}, {"n_cand", c.evaluation.n_cand}};
    write_text_atomic(json_path, j.dump(2) + "\n");
    write_manifest(p, mname, c, inputs, {conf_csv, tpr_path, json_path});
    std::cout << "mean diagonal " << format_double(cm.mean_diagonal()) << ", candidate TPR "
              << format_double(tpr.overall) << "\n";
}

void cmd_train_encoder(const Common& o, const std::string& measure_name, const std::string& checkpoint) {
    const RunConfig c = load_config(o);
    const std::string suffix = measure_name == "rebar" ? "" : "_" + measure_name;
    const Paths p = paths_for(c, suffix);
    const auto ds = open_dataset(p.dataset);
    std::optional<RebarModel> model;
    std::unique_ptr<DistanceMeasure> measure;
    std::vector<fs::path> inputs{p.dataset};
    if (measure_name == "rebar") {
        const fs::path ck = checkpoint.empty() ? p.rebar_ckpt : fs::path(checkpoint);
        require(ck, "rebar checkpoint");
        model.emplace(load_rebar_model(ck));
        measure = std::make_unique<RebarMeasure>(*model);
        inputs.push_back(ck);
    } else if (measure_name == "sliding-mse") {
        measure = std::make_unique<SlidingMseMeasure>(&ds);
    } else {
        throw ConfigError("unknown measure '" + measure_name + "' (expected rebar or sliding-mse)");
    }
    const std::string mname = "train-encoder" + suffix;
    ensure_writable({p.encoder_ckpt, p.contrast_loss, manifest_path(p, mname)}, o.force);
    auto r = train_contrastive(ds, *measure, Encoder(encoder_config(c, ds)), c.contrastive, [](const ContrastEpoch& e) {
        log_info("epoch " + std::to_string(e.epoch) + " loss " + format_double(e.loss));
    });
    fs::create_directories(p.out);
    save_encoder(r.encoder, p.encoder_ckpt);
    write_contrast_csv(r.history, p.contrast_loss);
    write_manifest(p, mname, c, inputs, {p.encoder_ckpt, p.contrast_loss});
    std::cout << "final loss " << format_double(r.history.epochs.empty() ? std::nan("") : r.history.epochs.back().loss)
              << "; wrote " << p.encoder_ckpt.string() << "\n";
}

void cmd_eval(const Common& o, const std::string& encoder_path, bool random_init) {
    const RunConfig c = load_config(o);
    const Paths p = paths_for(c);
    const auto ds = open_dataset(p.dataset);
    std::vector<fs::path> inputs{p.dataset};
    std::optional<Encoder> enc;
    std::string checksum;
    if (random_init) {
        enc.emplace(encoder_config(c, ds));
        checksum = "randominit";
    } else {
        const fs::path ck = encoder_path.empty() ? p.encoder_ckpt : fs::path(encoder_path);
        require(ck, "encoder checkpoint");
        enc.emplace(load_encoder(ck));
        checksum = hex64(checksum_path(ck));
        inputs.push_back(ck);
    }
    if (enc->config().in_channels != ds.channels())
        throw ConsistencyError("encoder expects " + std::to_string(enc->config().in_channels) + " channels, dataset has " +
                               std::to_string(ds.channels()));
    const std::string stem = stem_for(p.dataset, checksum, c.seed);
    const fs::path probe_json = p.reports / ("probe_" + stem + ".json");
    const fs::path probe_csv = p.reports / ("probe_" + stem + ".csv");
    const fs::path cluster_json = p.reports / ("cluster_" + stem + ".json");
    const fs::path cluster_csv = p.reports / ("cluster_" + stem + ".csv");
    const fs::path emb_csv =
        p.reports / ("embeddings_" + std::string(to_string(c.evaluation.split)) + "_" + stem + ".csv");
    const std::string mname = random_init ? "eval-random-init" : "eval";
    ensure_writable({probe_json, probe_csv, cluster_json, cluster_csv, emb_csv, manifest_path(p, mname)}, o.force);

    const auto T = c.rebar_train.subseq_len;
    const auto train_w = split_windows(ds, c.evaluation.probe_train_split, T);
    const auto test_w = split_windows(ds, c.evaluation.split, T);
    if (test_w.empty()) throw ValidationError("no labeled windows in the evaluation split");
    std::vector<int> ytr, yte;
    for (const auto& w : train_w) ytr.push_back(w.label);
    for (const auto& w : test_w) yte.push_back(w.label);
    const Matrix xtr = encode_all(train_w, *enc), xte = encode_all(test_w, *enc);
    const auto probe = linear_probe(xtr, ytr, xte, yte);
    const auto cl = cluster_report(xte, yte, std::min<int>(ds.num_classes, static_cast<int>(xte.rows())), c.seed);

    fs::create_directories(p.reports);
    const json pj = {{"accuracy", probe.accuracy},         {"auroc_macro", probe.auroc_macro},
                     {"auprc_macro", probe.auprc_macro},   {"iterations", probe.iterations},
                     {"converged", probe.converged},       {"train_windows", train_w.size()},
                     {"test_windows", test_w.size()},      {"train_split", to_string(c.evaluation.probe_train_split)},
                     {"test_split", to_string(c.evaluation.split)}};
    write_text_atomic(probe_json, pj.dump(2) + "\n");
    write_text_atomic(probe_csv, "accuracy,auroc_macro,auprc_macro\n" + format_double(probe.accuracy) + "," +
                                     format_double(probe.auroc_macro) + "," + format_double(probe.auprc_macro) + "\n");
    const json cj = {{"ari", cl.ari}, {"nmi", cl.nmi}, {"k", ds.num_classes}, {"assignments", cl.assignments}};
    write_text_atomic(cluster_json, cj.dump(2) + "\n");
    write_text_atomic(cluster_csv, "ari,nmi\n" + format_double(cl.ari) + "," + format_double(cl.nmi) + "\n");
    export_embeddings(*enc, ds, c.evaluation.split, T, emb_csv);
    write_manifest(p, mname, c, inputs, {probe_json, probe_csv, cluster_json, cluster_csv, emb_csv});
    std::cout << "probe accuracy " << format_double(probe.accuracy) << ", AUROC " << format_double(probe.auroc_macro)
              << ", AUPRC " << format_double(probe.auprc_macro) << "; ARI " << format_double(cl.ari) << ", NMI "
              << format_double(cl.nmi) << "\n";
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return kExitConfig;
        case ErrorKind::format: return kExitFormat;
        case ErrorKind::consistency:
        case ErrorKind::validation:
        case ErrorKind::size: return kExitInvalid;
        case ErrorKind::not_found:
        case ErrorKind::missing_artifact: return kExitMissing;
        case ErrorKind::io: return kExitIo;
        case ErrorKind::numeric: return kExitNumeric;
    }
    return kExitUnexpected;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Retrieval-based reconstruction measure and contrastive encoder pipeline", "rebar"};
    app.require_subcommand(1);
    Common o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("-c,--config", o.config, "INI configuration file");
        sub->add_option("--set", o.sets, "Override, section.key=value")->take_all();
        sub->add_option("-o,--output-dir", o.output_dir, "Output directory (overrides run.output_dir)");
        sub->add_flag("-f,--force", o.force, "Overwrite existing outputs");
        sub->add_flag("-v,--verbose", o.verbose, "Progress messages on stderr");
    };
    std::string measure = "rebar", checkpoint, encoder_path;
    std::vector<std::string> csvs;
    int num_classes = 0;
    double rate = 1.0;
    bool random_init = false;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
    common(synth);
    auto* imp = app.add_subcommand("import-csv", "Build a dataset from per-series CSV files");
    common(imp);
    imp->add_option("--csv", csvs, "CSV file, one per series")->required();
    imp->add_option("--num-classes", num_classes, "Number of classes")->required();
    imp->add_option("--sample-rate", rate, "Sampling rate in Hz");
    auto* tm = app.add_subcommand("train-measure", "Train the reconstruction measure");
    common(tm);
    auto* vm = app.add_subcommand("validate-measure", "Nearest-neighbor validation and candidate TPR");
    common(vm);
    vm->add_option("--measure", measure, "rebar or sliding-mse")->check(CLI::IsMember({"rebar", "sliding-mse"}));
    vm->add_option("--checkpoint", checkpoint, "Measure checkpoint (default <out>/rebar.ckpt)");
    auto* te = app.add_subcommand("train-encoder", "Contrastive encoder training");
    common(te);
    te->add_option("--measure", measure, "rebar or sliding-mse")->check(CLI::IsMember({"rebar", "sliding-mse"}));
    te->add_option("--checkpoint", checkpoint, "Measure checkpoint (default <out>/rebar.ckpt)");
    auto* ev = app.add_subcommand("eval", "Linear probe, clustering and embedding export");
    common(ev);
    ev->add_option("--encoder", encoder_path, "Encoder checkpoint (default <out>/encoder.ckpt)");
    ev->add_flag("--random-init", random_init, "Evaluate an untrained encoder");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }
    set_verbose(o.verbose);
    try {
        if (*synth) cmd_synth(o);
        else if (*imp) cmd_import_csv(o, csvs, num_classes, rate);
        else if (*tm) cmd_train_measure(o);
        else if (*vm) cmd_validate_measure(o, measure, checkpoint);
        else if (*te) cmd_train_encoder(o, measure, checkpoint);
        else if (*ev) cmd_eval(o, encoder_path, random_init);
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kExitUnexpected;
    }
}

}  // namespace rebar
