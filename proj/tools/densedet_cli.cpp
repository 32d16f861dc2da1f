// Command-line entry point: dataset generation, training, evaluation,
// paired baseline-vs-masked comparisons, and report rendering.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "densedet/dataset_io.hpp"
#include "densedet/report_io.hpp"
#include "densedet/scene.hpp"
#include "densedet/trainer.hpp"

namespace fs = std::filesystem;
using namespace densedet;

static const char* kVersion = "densedet 0.1.0";

static std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

static void write_manifest(const std::string& dir, const std::string& command,
                           const std::string& config_path, uint64_t dataset_fp,
                           const std::vector<uint64_t>& seeds) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_path;
    j["dataset_fingerprint"] = hex64(dataset_fp);
    j["seeds"] = seeds;
    j["version"] = kVersion;
    j["timestamp"] = timestamp_utc();
    std::ofstream(fs::path(dir) / "manifest.json") << j.dump(2) << '\n';
}

static KvConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                            int64_t seed_flag) {
    KvConfig kv = path.empty() ? KvConfig() : KvConfig::parse_file(path);
    for (const auto& o : overrides) kv.set_override(o);
    if (seed_flag >= 0) kv.set("train.seed", std::to_string(seed_flag));
    return kv;
}

struct SplitPaths {
    std::string root;
    std::string catalog() const { return (fs::path(root) / "catalog.txt").string(); }
    std::string split(const std::string& name) const { return (fs::path(root) / name).string(); }
};

static int cmd_generate(const KvConfig& kv, const std::string& config_path,
                        const std::string& out_dir) {
    SceneConfig scfg = SceneConfig::from_kv(kv);
    uint64_t seed = uint64_t(kv.get_i64("train.seed", 0));
    std::array<double, 3> fractions = {kv.get_double("split.train", 0.7),
                                       kv.get_double("split.val", 0.2),
                                       kv.get_double("split.test", 0.1)};
    int64_t cap = kv.get_i64("cap.max_labels", 300);
    bool cap_enabled = kv.get_bool("cap.enabled", true);

    // generate fully in memory first so an invalid config leaves no partial output
    auto dataset = generate_dataset(scfg, seed);
    DatasetSplit split = split_dataset(dataset, fractions, seed);
    ClassCatalog catalog = make_default_catalog(scfg.num_classes());
    if (cap_enabled) apply_label_cap(split.train, catalog, cap, seed);

    fs::create_directories(out_dir);
    catalog.save((fs::path(out_dir) / "catalog.txt").string());
    write_split_dir((fs::path(out_dir) / "train").string(), split.train);
    write_split_dir((fs::path(out_dir) / "val").string(), split.val);
    write_split_dir((fs::path(out_dir) / "test").string(), split.test);
    kv.save((fs::path(out_dir) / "config.txt").string());
    uint64_t fp = dataset_fingerprint(out_dir);
    write_manifest(out_dir, "generate", config_path, fp, {seed});
    std::cout << "wrote " << split.train.size() << "/" << split.val.size() << "/"
              << split.test.size() << " train/val/test samples to " << out_dir
              << " (fingerprint " << hex64(fp) << ")\n";
    return 0;
}

static void write_run_dir(const std::string& dir, const KvConfig& kv, const TrainResult& tr,
                          const EvalReport& eval_report, const ClassCatalog& catalog,
                          uint64_t dataset_fp) {
    fs::create_directories(dir);
    kv.save((fs::path(dir) / "config").string());
    std::ofstream(fs::path(dir) / "log.csv") << tr.log;
    std::map<std::string, std::string> meta = {{"dataset_fingerprint", hex64(dataset_fp)}};
    tr.final_net.save((fs::path(dir) / "ckpt_final").string(), meta);
    tr.best_net.save((fs::path(dir) / "ckpt_best").string(), meta);
    write_eval_report((fs::path(dir) / "eval").string(), eval_report, catalog);
}

static int cmd_train(KvConfig kv, const std::string& config_path, const std::string& data_dir,
                     const std::string& out_dir) {
    SplitPaths data{data_dir};
    if (!fs::is_directory(data_dir)) throw RuntimeError("missing data directory: " + data_dir);
    ClassCatalog catalog = ClassCatalog::load(data.catalog());
    auto train_samples = read_split_dir(data.split("train"));
    auto val_samples = read_split_dir(data.split("val"));
    if (!train_samples.empty())
        kv.set("train.image_size", std::to_string(train_samples[0].image.width));
    TrainConfig cfg = TrainConfig::from_kv(kv);
    if (cfg.cfpl.enabled && cfg.cfpl.whitelist_auto)
        for (int c : catalog.whitelist()) cfg.cfpl.whitelist.insert(c);

    uint64_t fp = dataset_fingerprint(data_dir);
    TrainResult tr = train(train_samples, val_samples, catalog, cfg);
    EvalReport val_report = evaluate_model(tr.best_net, val_samples, catalog, cfg);
    write_run_dir(out_dir, kv, tr, val_report, catalog, fp);
    write_manifest(out_dir, "train", config_path, fp, {cfg.seed});
    std::cout << "run complete: best val mAP " << format_double(tr.best_val_map) << " (epoch "
              << tr.best_epoch << "), artifacts in " << out_dir << "\n";
    return 0;
}

static int cmd_eval(const KvConfig& kv, const std::string& ckpt, const std::string& data_dir,
                    const std::string& split, const std::string& out_dir, bool force) {
    std::map<std::string, std::string> meta;
    DetectorNet net = DetectorNet::load(ckpt, &meta);
    SplitPaths data{data_dir};
    uint64_t fp = dataset_fingerprint(data_dir);
    auto it = meta.find("dataset_fingerprint");
    if (it != meta.end() && it->second != hex64(fp)) {
        std::cerr << "warning: checkpoint dataset fingerprint " << it->second
                  << " does not match " << hex64(fp) << "\n";
        if (!force) throw RuntimeError("fingerprint mismatch; pass --force to proceed");
    }
    ClassCatalog catalog = ClassCatalog::load(data.catalog());
    auto samples = read_split_dir(data.split(split));
    TrainConfig cfg = TrainConfig::from_kv(kv);
    EvalReport report = evaluate_model(net, samples, catalog, cfg);
    write_eval_report(out_dir, report, catalog);
    write_manifest(out_dir, "eval", "", fp, {});
    std::cout << "mAP@0.5 on " << split << ": " << format_double(report.map) << "\n";
    return 0;
}

static int cmd_compare(KvConfig kv, const std::string& config_path, const std::string& data_dir,
                       const std::string& out_dir) {
    SplitPaths data{data_dir};
    ClassCatalog catalog = ClassCatalog::load(data.catalog());
    auto train_samples = read_split_dir(data.split("train"));
    auto val_samples = read_split_dir(data.split("val"));
    auto test_samples = read_split_dir(data.split("test"));
    if (!train_samples.empty())
        kv.set("train.image_size", std::to_string(train_samples[0].image.width));
    TrainConfig cfg = TrainConfig::from_kv(kv);
    uint64_t fp = dataset_fingerprint(data_dir);

    ComparisonResult cmp = run_comparison(train_samples, val_samples, test_samples, catalog, cfg);

    std::vector<uint64_t> seeds;
    for (const auto& run : cmp.runs) {
        std::string name = (run.cfpl_enabled ? "cfpl_s" : "baseline_s") +
                           std::to_string(run.seed);
        KvConfig run_kv = kv;
        run_kv.set("train.seed", std::to_string(run.seed));
        run_kv.set("cfpl.enabled", run.cfpl_enabled ? "true" : "false");
        write_run_dir((fs::path(out_dir) / "runs" / name).string(), run_kv, run.result,
                      run.report, catalog, fp);
        nlohmann::json rm = {{"name", name},
                             {"cfpl", run.cfpl_enabled},
                             {"seed", run.seed},
                             {"best_val_map", run.result.best_val_map}};
        std::ofstream(fs::path(out_dir) / "runs" / name / "run.json") << rm.dump(2) << '\n';
        seeds.push_back(run.seed);
    }
    std::string table = render_comparison_table(cmp);
    std::ofstream(fs::path(out_dir) / "table.txt") << table;
    write_manifest(out_dir, "compare", config_path, fp, seeds);
    std::cout << table;
    return 0;
}

static int cmd_report(const std::string& runs_dir) {
    ComparisonResult cmp;
    std::vector<fs::path> dirs;
    fs::path root = fs::path(runs_dir) / "runs";
    if (!fs::is_directory(root)) throw RuntimeError("no runs/ directory under " + runs_dir);
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        std::ifstream rf(d / "run.json");
        std::ifstream ef(d / "eval" / "report.json");
        if (!rf || !ef) continue;
        nlohmann::json rm = nlohmann::json::parse(rf);
        RunArtifacts run;
        run.cfpl_enabled = rm["cfpl"].get<bool>();
        run.seed = rm["seed"].get<uint64_t>();
        run.report = report_from_json(nlohmann::json::parse(ef));
        cmp.runs.push_back(std::move(run));
    }
    if (cmp.runs.empty()) throw RuntimeError("no completed runs under " + runs_dir);
    std::cout << render_comparison_table(cmp);
    return 0;
}

int main(int argc, char** argv) {
    CLI::App app{"Partial-label-aware dense-scene detector toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, ckpt, split = "test", runs_dir;
    std::vector<std::string> overrides;
    int64_t seed_flag = -1;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key=value config file");
        sub->add_option("--set", overrides, "override config entries, key=value")
            ->take_all();
        sub->add_option("--seed", seed_flag, "seed override");
    };

    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    add_common(gen);
    gen->add_option("--out", out_dir, "output dataset directory")->required();

    auto* trn = app.add_subcommand("train", "train one detector run");
    add_common(trn);
    trn->add_option("--data", data_dir, "dataset directory")->required();
    trn->add_option("--out", out_dir, "run output directory")->required();

    auto* evl = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(evl);
    evl->add_option("--ckpt", ckpt, "checkpoint file")->required();
    evl->add_option("--data", data_dir, "dataset directory")->required();
    evl->add_option("--split", split, "split to evaluate (train|val|test)");
    evl->add_option("--out", out_dir, "report output directory")->required();
    evl->add_flag("--force", force, "proceed despite fingerprint mismatch");

    auto* cpr = app.add_subcommand("compare", "paired baseline vs masked-loss comparison");
    add_common(cpr);
    cpr->add_option("--data", data_dir, "dataset directory")->required();
    cpr->add_option("--out", out_dir, "comparison output directory")->required();

    auto* rep = app.add_subcommand("report", "render the aggregate table of a comparison");
    rep->add_option("--runs", runs_dir, "comparison output directory")->required();

    try {
        app.parse(argc, argv);
        KvConfig kv = load_config(config_path, overrides, seed_flag);
        if (gen->parsed()) return cmd_generate(kv, config_path, out_dir);
        if (trn->parsed()) return cmd_train(kv, config_path, data_dir, out_dir);
        if (evl->parsed()) return cmd_eval(kv, ckpt, data_dir, split, out_dir, force);
        if (cpr->parsed()) return cmd_compare(kv, config_path, data_dir, out_dir);
        if (rep->parsed()) return cmd_report(runs_dir);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
