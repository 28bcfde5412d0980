// Command-line front end: synthetic data generation, experiment runs and
// read-only post-processing of their score tables.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "oktacal/config.hpp"
#include "oktacal/dataset.hpp"
#include "oktacal/manifest.hpp"
#include "oktacal/model_record.hpp"
#include "oktacal/pipeline.hpp"
#include "oktacal/reports.hpp"
#include "oktacal/synthetic.hpp"

namespace fs = std::filesystem;
using namespace oktacal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Raised for invocations that are invalid regardless of the input data.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int verbosity = 0;

void info(const std::string& msg) {
    if (verbosity >= 0) std::cerr << msg << '\n';
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    writer(out);
    out.flush();
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

/// Writes to `out_path` when given, else to stdout; returns the digest of
/// the written file when one was written.
template <class Writer>
std::optional<std::string> emit(const std::string& out_path, Writer&& writer) {
    if (out_path.empty()) {
        writer(std::cout);
        return std::nullopt;
    }
    write_file(out_path, writer);
    return file_digest(out_path);
}

fs::path scores_path(const std::string& dir) {
    const fs::path p = fs::path(dir) / "scores.csv";
    if (!fs::exists(p)) throw UsageError("no scores.csv in '" + dir + "'; run `oktacal run` first");
    return p;
}

/// Settings recorded by the run manifest of a scores directory, if any.
std::optional<Json> run_manifest_of(const std::string& dir) {
    const fs::path p = fs::path(dir) / "manifest.json";
    if (!fs::exists(p)) return std::nullopt;
    return read_manifest(p.string());
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

int cmd_generate(const GenerateArgs& a) {
    SynthConfig cfg = synth_config_from_json(read_json_file(a.config));
    if (a.seed) cfg.seed = *a.seed;
    if (fs::exists(a.out) && !a.force) throw UsageError("'" + a.out + "' exists; pass --force to overwrite");
    const StationDataset ds = synth_generate(cfg);
    save_dataset(ds, a.out);

    Json m = manifest_base("generate", to_json(cfg));
    m["seed"] = cfg.seed;
    m["outputs"] = {{fs::path(a.out).filename().string(), file_digest(a.out)}};
    m["rows"] = ds.row_count();
    write_manifest(m, a.out + ".manifest.json");
    info("wrote " + std::to_string(ds.row_count()) + " rows to " + a.out);
    return kExitOk;
}

// --------------------------------------------------------------------- run

struct RunArgs {
    std::string config, manifest, data, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool force = false;
};

std::string model_file_name(const ModelKey& k) {
    return k.station_id + "_L" + std::to_string(k.lead_time) + "_" + k.method + "_" + std::to_string(k.test_year) +
           "_" + k.season + ".json";
}

int cmd_run(const RunArgs& a) {
    ExperimentConfig cfg;
    std::optional<Json> source_manifest;
    if (!a.manifest.empty()) {
        source_manifest = read_manifest(a.manifest);
        cfg = experiment_config_from_manifest(*source_manifest);
        cfg.threads = source_manifest->value("threads", std::size_t{0});
    } else {
        cfg = experiment_config_from_json(read_json_file(a.config));
    }
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;

    const fs::path out_dir(a.out_dir);
    if (fs::exists(out_dir) && !fs::is_directory(out_dir))
        throw UsageError("'" + a.out_dir + "' exists and is not a directory");
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !a.force)
        throw UsageError("output directory '" + a.out_dir + "' is not empty; pass --force to overwrite");

    const std::string data_digest = file_digest(a.data);
    if (source_manifest && source_manifest->contains("data_digest") &&
        source_manifest->at("data_digest") != data_digest)
        throw UsageError("data file differs from the one recorded in the manifest");
    const StationDataset ds = load_dataset(a.data);
    for (const auto& w : ds.warnings) info("warning: " + w);

    fs::create_directories(out_dir);
    const fs::path models_dir = out_dir / "models";
    fs::remove_all(models_dir);
    if (cfg.save_models) fs::create_directories(models_dir);

    RunOptions opts;
    std::mutex sink_mutex;
    std::vector<std::string> sink_errors;
    if (cfg.save_models) {
        opts.model_sink = [&](const ModelKey& key, const ClassifierModel& model) {
            try {
                save_model(model, (models_dir / model_file_name(key)).string());
            } catch (const std::exception& e) {
                std::lock_guard lock(sink_mutex);
                sink_errors.push_back(e.what());
            }
        };
    }
    if (verbosity > 0) {
        opts.progress = [](std::size_t done, std::size_t total) {
            std::cerr << "task " << done << "/" << total << '\n';
        };
    }

    const ExperimentResult result = run_experiment(ds, cfg, opts);
    for (const auto& e : sink_errors) info("warning: " + e);

    Json outputs = Json::object();
    auto put = [&](const std::string& name, auto&& writer) {
        const fs::path p = out_dir / name;
        write_file(p, writer);
        outputs[name] = file_digest(p.string());
    };
    put("scores.csv", [&](std::ostream& o) { write_scores(result.cases, o); });
    put("pmfs.csv", [&](std::ostream& o) { write_pmfs(result.cases, o); });
    put("summary.csv", [&](std::ostream& o) { write_metric_table(summarize_scores(result.cases), o); });
    put("provenance.csv", [&](std::ostream& o) { write_provenance(result.provenance, o); });
    put("failures.csv", [&](std::ostream& o) { write_failures(result.failures, o); });

    const auto completed = result.completed_methods();
    Json m = manifest_base("run", to_json(cfg));
    m["seed"] = cfg.seed;
    m["threads"] = cfg.threads;
    m["data_file"] = fs::path(a.data).filename().string();
    m["data_digest"] = data_digest;
    m["outputs"] = outputs;
    m["completed_methods"] = completed;
    m["failure_count"] = result.failures.size();
    write_manifest(m, (out_dir / "manifest.json").string());

    for (const auto& f : result.failures)
        info("failed: " + f.station_id + " lead " + std::to_string(f.lead_time) + " " + f.method +
             (f.test_year ? " " + std::to_string(f.test_year) : std::string()) + ": " + f.message);
    info("scored " + std::to_string(result.cases.size()) + " cases for " + std::to_string(completed.size()) + " of " +
         std::to_string(result.methods.size()) + " methods into " + a.out_dir);
    return completed.empty() ? kExitFailure : kExitOk;
}

// ----------------------------------------------------- post-processing

struct CompareArgs {
    std::string scores_dir, reference, out;
    std::size_t n_boot = 2000;
    double block_len = 25.0;
    double level = 0.95;
    std::uint64_t seed = 1;
};

int cmd_compare(const CompareArgs& a) {
    const auto cases = load_scores(scores_path(a.scores_dir).string());
    std::string reference = a.reference;
    if (reference.empty()) {
        const auto rm = run_manifest_of(a.scores_dir);
        reference = rm ? rm->at("config").value("reference", "RAW") : "RAW";
    }
    if (std::none_of(cases.begin(), cases.end(), [&](const CaseRecord& c) { return c.method == reference; }))
        throw UsageError("reference method '" + reference + "' has no scores in '" + a.scores_dir + "'");
    BootstrapOptions boot{a.n_boot, a.block_len, a.level};
    if (boot.n_boot < 2 || !(boot.mean_block_len >= 1.0) || !(boot.level > 0.0 && boot.level < 1.0))
        throw UsageError("invalid bootstrap settings");
    const auto rows = skill_table(cases, reference, boot, a.seed);
    const auto digest = emit(a.out, [&](std::ostream& o) { write_metric_table(rows, o); });
    if (digest) {
        Json m = manifest_base("compare", {{"reference", reference},
                                           {"n_boot", a.n_boot},
                                           {"mean_block_len", a.block_len},
                                           {"level", a.level},
                                           {"seed", a.seed}});
        m["seed"] = a.seed;
        m["inputs"] = {{"scores.csv", file_digest(scores_path(a.scores_dir).string())}};
        m["outputs"] = {{fs::path(a.out).filename().string(), *digest}};
        write_manifest(m, a.out + ".manifest.json");
    }
    return kExitOk;
}

struct DmArgs {
    std::string scores_dir, out, metric = "CRPS";
    double alpha = 0.05;
};

int cmd_dm_matrix(const DmArgs& a) {
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    const ScoreKind kind = a.metric == "LogS" ? ScoreKind::LogS : ScoreKind::Crps;
    const auto cases = load_scores(scores_path(a.scores_dir).string());
    const auto cells = dm_matrix(cases, a.alpha, kind);
    const auto digest = emit(a.out, [&](std::ostream& o) { write_dm_matrix(cells, o); });
    if (digest) {
        Json m = manifest_base("dm-matrix", {{"alpha", a.alpha}, {"metric", a.metric}});
        m["inputs"] = {{"scores.csv", file_digest(scores_path(a.scores_dir).string())}};
        m["outputs"] = {{fs::path(a.out).filename().string(), *digest}};
        write_manifest(m, a.out + ".manifest.json");
    }
    return kExitOk;
}

struct PitArgs {
    std::string scores_dir, out;
    std::size_t bins = 20;
};

int cmd_pit(const PitArgs& a) {
    if (a.bins == 0) throw UsageError("--bins must be positive");
    const auto cases = load_scores(scores_path(a.scores_dir).string());
    const auto rows = pit_table(cases, a.bins);
    const auto digest = emit(a.out, [&](std::ostream& o) { write_pit_table(rows, o); });
    if (digest) {
        Json m = manifest_base("pit", {{"bins", a.bins}});
        m["inputs"] = {{"scores.csv", file_digest(scores_path(a.scores_dir).string())}};
        m["outputs"] = {{fs::path(a.out).filename().string(), *digest}};
        write_manifest(m, a.out + ".manifest.json");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibration of ensemble total cloud cover forecasts on the okta scale"};
    app.set_version_flag("--version", std::string(kOktacalVersion));
    app.require_subcommand(1);
    int verbose_count = 0;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose_count, "Report progress (repeatable)");
    app.add_flag("-q,--quiet", quiet, "Only print errors");

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Generate a synthetic station dataset");
    generate->add_option("-c,--config", gen.config, "Synthetic generator config (JSON)")->required();
    generate->add_option("-o,--out", gen.out, "Output dataset file")->required();
    generate->add_option("--seed", gen.seed, "Override the config seed");
    generate->add_flag("--force", gen.force, "Overwrite an existing output file");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Fit, predict and score every method over rolling windows");
    auto* run_config = run_cmd->add_option("-c,--config", run.config, "Experiment config (JSON)");
    auto* run_manifest = run_cmd->add_option("--from-manifest", run.manifest, "Repeat the run recorded in a manifest");
    run_config->excludes(run_manifest);
    run_cmd->add_option("-d,--data", run.data, "Dataset file")->required();
    run_cmd->add_option("-o,--out-dir", run.out_dir, "Output directory")->required();
    run_cmd->add_option("--seed", run.seed, "Override the config seed");
    run_cmd->add_option("--threads", run.threads, "Worker threads (0 = all cores)");
    run_cmd->add_flag("--force", run.force, "Write into a non-empty output directory");

    CompareArgs cmp;
    auto* compare = app.add_subcommand("compare", "Skill scores against a reference with bootstrap intervals");
    compare->add_option("-s,--scores", cmp.scores_dir, "Run output directory")->required();
    compare->add_option("-r,--reference", cmp.reference, "Reference method (default: from the run manifest)");
    compare->add_option("--n-boot", cmp.n_boot, "Bootstrap resamples")->capture_default_str();
    compare->add_option("--block-len", cmp.block_len, "Mean block length in days")->capture_default_str();
    compare->add_option("--level", cmp.level, "Interval coverage")->capture_default_str();
    compare->add_option("--seed", cmp.seed, "Bootstrap seed")->capture_default_str();
    compare->add_option("-o,--out", cmp.out, "Output file (default: stdout)");

    DmArgs dm;
    auto* dm_cmd = app.add_subcommand("dm-matrix", "Pairwise share of stations with significantly better scores");
    dm_cmd->add_option("-s,--scores", dm.scores_dir, "Run output directory")->required();
    dm_cmd->add_option("--alpha", dm.alpha, "False discovery rate level")->capture_default_str();
    dm_cmd->add_option("--metric", dm.metric, "CRPS or LogS")
        ->capture_default_str()
        ->check(CLI::IsMember({"CRPS", "LogS"}));
    dm_cmd->add_option("-o,--out", dm.out, "Output file (default: stdout)");

    PitArgs pit;
    auto* pit_cmd = app.add_subcommand("pit", "PIT histogram counts per method and lead time");
    pit_cmd->add_option("-s,--scores", pit.scores_dir, "Run output directory")->required();
    pit_cmd->add_option("--bins", pit.bins, "Number of equal-width bins")->capture_default_str();
    pit_cmd->add_option("-o,--out", pit.out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    verbosity = quiet ? -1 : verbose_count;

    try {
        if (*generate) return cmd_generate(gen);
        if (*run_cmd) {
            if (run.config.empty() && run.manifest.empty())
                throw UsageError("run needs --config or --from-manifest");
            return cmd_run(run);
        }
        if (*compare) return cmd_compare(cmp);
        if (*dm_cmd) return cmd_dm_matrix(dm);
        if (*pit_cmd) return cmd_pit(pit);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
