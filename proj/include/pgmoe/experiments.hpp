#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgmoe/dataset.hpp"
#include "pgmoe/losses.hpp"
#include "pgmoe/models.hpp"

namespace pgmoe {

struct ModelSpec {
    std::string kind = "pgmoe";  // pgmoe | baseline
    int hidden_layers = 2;
    int hidden_width = 200;
    // Empty means a single expert over the whole space.
    std::vector<SzInterval> partition = {{0, -5.0, 0.0}, {1, 1.0, 3.0}, {2, 4.0, 5.0}};
    Featurization featurization = Featurization::fields_only;
    int input_width = 2;
};

struct OptimizerSpec {
    double learning_rate = 3e-4;
    double momentum = 0.99;
    int batch_size = 8;
    double decay_factor = 0.987;  // 0 disables plateau decay
    int plateau_patience = 8;
};

struct ScheduleSpec {
    int max_epochs = 400;
    int pg_start_epoch = 55;  // epochs [0, pg_start_epoch) use the cosine loss only
    int early_stop_patience = 30;
};

struct SeedSpec {
    std::uint64_t init = 1;
    std::uint64_t split = 2023;
    std::uint64_t data_order = 1;
};

struct SupervisionSpec {
    std::vector<BxRange> labeled = {{0.0, 0.5}};
    std::vector<BxRange> unlabeled = {{0.5, 1.0}};
    // Keeps only the first k unlabeled candidates in ascending (B_x, B_z) order.
    std::optional<std::size_t> unlabeled_limit;
};

struct RunConfig {
    int n_spins = 10;
    double j_coupling = 1.0;
    DatasetConfig dataset;
    ModelSpec model;
    SupervisionSpec supervision;
    LossWeights weights{100.0, 200.0};
    OptimizerSpec optimizer;
    ScheduleSpec schedule;
    SeedSpec seeds;
};

RunConfig default_pgmoe_config();
RunConfig default_baseline_config();
void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
// Unknown keys at any level are rejected; missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

std::unique_ptr<WavefunctionModel> make_model(const RunConfig& config);

struct EpochRecord {
    int epoch = 0;  // 1-based
    LossPhase phase = LossPhase::warmup;
    double train_cs = 0.0;
    double train_pg = 0.0;
    double train_loss = 0.0;
    double val_mean_cs = 0.0;
    double val_cs_loss = 0.0;
    double learning_rate = 0.0;
    std::size_t labeled_items = 0;
    std::size_t unlabeled_items = 0;
    std::size_t skipped_unlabeled = 0;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    std::string stop_reason;
    int best_epoch = 0;
    int stop_epoch = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

struct TrainOptions {
    std::function<void(const EpochRecord&)> on_epoch;
    std::function<void(int epoch, const LossReport&)> on_batch;
};

struct TrainResult {
    std::unique_ptr<WavefunctionModel> model;  // best-validation parameters
    TrainingLog log;
};

Supervision training_data(const RunConfig& config, const DatasetBundle& bundle);

TrainResult train(const RunConfig& config, const DatasetBundle& bundle, const TrainOptions& options = {});

struct EvalRow {
    double b_x = 0.0;
    double b_z = 0.0;
    double cs = 0.0;
};

struct EvalReport {
    std::string dataset_id;
    double mean_cs = 0.0;
    double std_cs = 0.0;  // population standard deviation
    std::vector<EvalRow> rows;
};

EvalReport evaluate(const WavefunctionModel& model, std::span<const LabeledExample> examples,
                    const std::string& dataset_id);
std::string eval_to_csv(const EvalReport& report);
EvalReport eval_from_csv(const std::string& text, const std::string& dataset_id);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

struct RunSummary {
    std::uint64_t seed = 0;
    std::string config_hash;
    double mean_cs_seen = 0.0;
    double std_cs_seen = 0.0;
    double mean_cs_unseen = 0.0;
    double std_cs_unseen = 0.0;
    int best_epoch = 0;
    int stop_epoch = 0;
    std::string stop_reason;
    std::size_t param_count = 0;
    double wall_seconds = 0.0;
    std::filesystem::path dir;
};

std::string config_hash(const RunConfig& config, const DatasetBundle& bundle);

// Trains and evaluates one configuration, writing config.json, log.csv,
// model.ckpt, eval_*.csv and summary.json into `dir`. With `reuse`, a
// completed run whose config hash matches is loaded instead of retrained.
RunSummary run_experiment(const RunConfig& config, const DatasetBundle& bundle, const std::filesystem::path& dir,
                          bool reuse = true, const TrainOptions& options = {});
RunSummary load_run_summary(const std::filesystem::path& dir);

enum class AggregateMode { mean_std, best };
AggregateMode aggregate_mode_from_string(const std::string& name);

struct AggregateReport {
    std::string variant;
    std::size_t seed_count = 0;
    double mean_cs_seen = 0.0;
    double std_cs_seen = 0.0;
    double mean_cs_unseen = 0.0;
    double std_cs_unseen = 0.0;
    double stop_epoch = 0.0;  // mean over runs
    std::size_t param_count = 0;
    std::vector<RunSummary> runs;
    std::vector<std::string> failures;
    std::size_t best_run = 0;  // index into runs, by unseen mean CS
};

AggregateReport aggregate(const std::string& variant, std::vector<RunSummary> runs, AggregateMode mode);

// Seed s trains with init = data_order = s; the split seed stays fixed.
AggregateReport multi_seed(const RunConfig& config, const DatasetBundle& bundle, std::span<const std::uint64_t> seeds,
                           AggregateMode mode, const std::filesystem::path& dir, const std::string& variant = "run",
                           bool reuse = true);

std::vector<std::uint64_t> default_seeds(std::size_t count);

// Metrics CSV: variant, seed_count, mean/std seen, mean/std unseen, stop_epoch, param_count.
std::string metrics_csv_header();
std::string metrics_csv_row(const AggregateReport& report);

enum class AblationKind { decomposition, unlabeled_sweep, labeled_sweep, hyperparams };
AblationKind ablation_kind_from_string(const std::string& name);

struct AblationVariant {
    std::string name;
    RunConfig config;
};

std::vector<AblationVariant> ablation_variants(AblationKind kind, const RunConfig& base, const DatasetBundle& bundle);

std::vector<AggregateReport> ablate(AblationKind kind, const RunConfig& base, const DatasetBundle& bundle,
                                    std::span<const std::uint64_t> seeds, const std::filesystem::path& dir);

struct ReportFiles {
    std::filesystem::path metrics_csv;
    std::filesystem::path grid_csv;
};

// Regenerates metrics.csv and cs_grid.csv (unseen-test CS pivoted by B_z rows
// and B_x columns, from the best run) from persisted run artifacts.
ReportFiles report(const std::filesystem::path& run_dir);

std::string cs_grid_csv(const EvalReport& unseen);

}  // namespace pgmoe
