#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgmoe/eigensolver.hpp"
#include "pgmoe/models.hpp"

namespace pgmoe {

// Axis sampling: half-open axes step by (max-min)/steps and exclude max;
// closed axes step by (max-min)/(steps-1) and include both ends.
struct GridSpec {
    double bx_min = 0.0;
    double bx_max = 1.0;
    int bx_steps = 10;
    bool bx_closed = false;
    double bz_min = 0.06;
    double bz_max = 2.0;
    int bz_steps = 30;
    bool bz_closed = true;
    double j_coupling = 1.0;
};

GridSpec default_training_grid();
GridSpec default_unseen_grid();
// B_x in [1.0, 1.5) with the training B_z axis; unlabeled by construction.
GridSpec default_unlabeled_extension();

void validate(const GridSpec& spec);
std::vector<double> axis_values(double min, double max, int steps, bool closed);
// Row-major by B_x.
std::vector<FieldPoint> make_grid(const GridSpec& spec);

struct LabeledExample {
    double b_x = 0.0;
    double b_z = 0.0;
    Wavefunction psi;
    double e0 = 0.0;

    FieldPoint point() const { return {b_x, b_z}; }
};

struct UnlabeledExample {
    double b_x = 0.0;
    double b_z = 0.0;

    FieldPoint point() const { return {b_x, b_z}; }
};

struct SolverSettings {
    double tol = 1e-10;
    int max_krylov = 0;
    std::uint64_t seed = 0;
};

std::vector<LabeledExample> solve_labels(std::span<const FieldPoint> points, int n_spins, double j_coupling,
                                         const SolverSettings& solver);

// Throws when a stored label is not a unit-norm, gauge-fixed ground state with
// residual <= max_residual.
void verify_label(const LabeledExample& example, int n_spins, double j_coupling, double max_residual = 1e-8);

struct DataSplit {
    std::vector<LabeledExample> train_pool;
    std::vector<LabeledExample> validation;
    std::vector<LabeledExample> test_seen;
};

// Per B_x bin, 4 B_z values are drawn: 2 to test, 2 to validation.
DataSplit split_dataset(std::span<const LabeledExample> grid, std::uint64_t split_seed);

// Half-open [lo, hi) with a 1e-9 tolerance on both ends.
struct BxRange {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double b_x) const;
};

struct Supervision {
    std::vector<LabeledExample> labeled;
    std::vector<UnlabeledExample> unlabeled;
    std::size_t excluded = 0;
};

Supervision assign_supervision(std::span<const LabeledExample> pool, std::span<const BxRange> labeled_ranges,
                               std::span<const BxRange> unlabeled_ranges);

struct DatasetConfig {
    int n_spins = 10;
    GridSpec train_grid = default_training_grid();
    GridSpec unseen_grid = default_unseen_grid();
    std::optional<GridSpec> unlabeled_extension = default_unlabeled_extension();
    std::uint64_t split_seed = 2023;
    SolverSettings solver;
};

struct DatasetManifest {
    DatasetConfig config;
    std::size_t train_pool = 0;
    std::size_t validation = 0;
    std::size_t test_seen = 0;
    std::size_t test_unseen = 0;
    std::size_t unlabeled_extension = 0;
    std::string content_hash;
};

struct DatasetBundle {
    DatasetManifest manifest;
    std::vector<LabeledExample> train_pool;
    std::vector<LabeledExample> validation;
    std::vector<LabeledExample> test_seen;
    std::vector<LabeledExample> test_unseen;
    std::vector<UnlabeledExample> unlabeled_extension;

    int n_spins() const { return manifest.config.n_spins; }
    double j_coupling() const { return manifest.config.train_grid.j_coupling; }
};

DatasetBundle generate_bundle(const DatasetConfig& config);

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

// One JSON object per line; psi and e0 omitted for unlabeled records.
std::string to_jsonl(std::span<const LabeledExample> examples);
std::string to_jsonl(std::span<const UnlabeledExample> examples);
std::vector<LabeledExample> labeled_from_jsonl(const std::string& text);
std::vector<UnlabeledExample> unlabeled_from_jsonl(const std::string& text);

std::string fnv1a_hex(std::string_view bytes);

nlohmann::json to_json(const GridSpec& spec);
GridSpec grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetConfig& config);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

// Rejects keys outside `allowed`, naming the context.
void require_known_keys(const nlohmann::json& object, std::initializer_list<const char*> allowed, const std::string& where);

}  // namespace pgmoe
