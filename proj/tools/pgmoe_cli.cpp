// pgmoe: dataset generation, training, evaluation and ablation runs.

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pgmoe/errors.hpp"
#include "pgmoe/experiments.hpp"

namespace fs = std::filesystem;
using namespace pgmoe;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

RunConfig config_or_default(const std::string& path) {
    return path.empty() ? default_pgmoe_config() : load_run_config(path);
}

void print_aggregate(const AggregateReport& r) {
    std::cout << metrics_csv_header() << metrics_csv_row(r);
    for (const auto& f : r.failures) std::cerr << "failed: " << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Activation matrices are several MB each and reallocated every batch;
    // keep them on the heap instead of fresh mmap pages.
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Mixture-of-experts ground-state learner for the transverse-field Ising chain"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, model_path, run_dir, kind, mode = "mean_std";
    std::size_t seed_count = 5;
    bool no_reuse = false;
    bool verbose = false;

    auto* gen = app.add_subcommand("gen-data", "Solve ground states on the field grids and write a dataset bundle");
    gen->add_option("--config", config_path, "Run config (JSON); its dataset section is used");
    gen->add_option("--out", out_path, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train one model and evaluate it on both test sets");
    tr->add_option("--config", config_path, "Run config (JSON)");
    tr->add_option("--data", data_dir, "Dataset directory")->required();
    tr->add_option("--out", out_path, "Run directory")->required();
    tr->add_flag("--no-reuse", no_reuse, "Retrain even if a matching completed run exists");
    tr->add_flag("-v,--verbose", verbose, "Print one line per epoch");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled JSONL file");
    ev->add_option("--model", model_path, "Checkpoint file")->required();
    ev->add_option("--data", data_dir, "Labeled JSONL file")->required();
    ev->add_option("--out", out_path, "Per-point CSV output")->required();

    auto* ab = app.add_subcommand("ablate", "Run an ablation family and write one CSV row per variant");
    ab->add_option("--kind", kind, "decomposition | unlabeled_sweep | labeled_sweep | hyperparams")->required();
    ab->add_option("--config", config_path, "Base run config (JSON)");
    ab->add_option("--data", data_dir, "Dataset directory")->required();
    ab->add_option("--out", out_path, "Metrics CSV output")->required();
    ab->add_option("--runs", run_dir, "Directory for per-run artifacts (default: next to --out)");
    ab->add_option("--seeds", seed_count, "Number of seeds per variant");

    auto* sw = app.add_subcommand("sweep-seeds", "Train one config over several seeds and aggregate");
    sw->add_option("--config", config_path, "Run config (JSON)");
    sw->add_option("--data", data_dir, "Dataset directory")->required();
    sw->add_option("--out", out_path, "Output directory")->required();
    sw->add_option("--seeds", seed_count, "Number of seeds");
    sw->add_option("--mode", mode, "mean_std | best");

    auto* rp = app.add_subcommand("report", "Regenerate metrics.csv and cs_grid.csv from persisted runs");
    rp->add_option("--run", run_dir, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const RunConfig c = config_or_default(config_path);
            const DatasetBundle bundle = generate_bundle(c.dataset);
            save_bundle(bundle, out_path);
            std::cout << "wrote " << out_path << " (hash " << bundle.manifest.content_hash << ")\n";
        } else if (*tr) {
            const RunConfig c = config_or_default(config_path);
            const DatasetBundle bundle = load_bundle(data_dir);
            TrainOptions opts;
            if (verbose) {
                opts.on_epoch = [](const EpochRecord& r) {
                    std::cout << "epoch " << r.epoch << " loss " << r.train_loss << " val_cs " << r.val_mean_cs
                              << " lr " << r.learning_rate << "\n";
                };
            }
            const RunSummary s = run_experiment(c, bundle, out_path, !no_reuse, opts);
            std::cout << "seen " << s.mean_cs_seen << " +- " << s.std_cs_seen << ", unseen " << s.mean_cs_unseen
                      << " +- " << s.std_cs_unseen << ", stopped at epoch " << s.stop_epoch << " (" << s.stop_reason
                      << ")\n";
        } else if (*ev) {
            const auto model = load_checkpoint(model_path);
            const auto examples = labeled_from_jsonl(slurp(data_dir));
            const EvalReport r = evaluate(*model, examples, fs::path(data_dir).stem().string());
            dump(out_path, eval_to_csv(r));
            std::cout << "mean cs " << r.mean_cs << " +- " << r.std_cs << " over " << r.rows.size() << " points\n";
        } else if (*ab) {
            const RunConfig c = config_or_default(config_path);
            const DatasetBundle bundle = load_bundle(data_dir);
            const auto seeds = default_seeds(seed_count);
            const fs::path runs = run_dir.empty() ? fs::path(out_path).parent_path() / (kind + "_runs") : fs::path(run_dir);
            const auto reports = ablate(ablation_kind_from_string(kind), c, bundle, seeds, runs);
            std::string csv = metrics_csv_header();
            bool failed = false;
            for (const auto& r : reports) {
                if (r.runs.empty()) {
                    failed = true;
                    continue;
                }
                csv += metrics_csv_row(r);
                failed = failed || !r.failures.empty();
                for (const auto& f : r.failures) std::cerr << r.variant << ": " << f << "\n";
            }
            dump(out_path, csv);
            std::cout << csv;
            return failed ? 1 : 0;
        } else if (*sw) {
            const RunConfig c = config_or_default(config_path);
            const DatasetBundle bundle = load_bundle(data_dir);
            const auto seeds = default_seeds(seed_count);
            const auto r = multi_seed(c, bundle, seeds, aggregate_mode_from_string(mode), out_path, "run");
            if (r.runs.empty()) {
                for (const auto& f : r.failures) std::cerr << "failed: " << f << "\n";
                return 1;
            }
            dump(fs::path(out_path) / "metrics.csv", metrics_csv_header() + metrics_csv_row(r));
            print_aggregate(r);
            return r.failures.empty() ? 0 : 1;
        } else if (*rp) {
            const ReportFiles f = report(run_dir);
            std::cout << "wrote " << f.metrics_csv.string() << " and " << f.grid_csv.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
