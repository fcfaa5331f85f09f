#include "pgmoe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pgmoe/errors.hpp"

namespace pgmoe {

namespace {

constexpr double kBxTolerance = 1e-9;

const char* const kSplitFiles[] = {"train_pool.jsonl", "validation.jsonl", "test_seen.jsonl", "test_unseen.jsonl",
                                   "unlabeled_extension.jsonl"};

void append_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string point_text(double b_x, double b_z) {
    std::ostringstream s;
    s << "(B_x=" << b_x << ", B_z=" << b_z << ")";
    return s.str();
}

std::string content_hash(const DatasetBundle& b) {
    return fnv1a_hex(to_jsonl(b.train_pool) + to_jsonl(b.validation) + to_jsonl(b.test_seen) +
                     to_jsonl(b.test_unseen) + to_jsonl(b.unlabeled_extension));
}

}  // namespace

GridSpec default_training_grid() { return GridSpec{}; }

GridSpec default_unseen_grid() {
    GridSpec g;
    g.bx_min = 1.05;
    g.bx_max = 2.0;
    g.bx_closed = true;
    return g;
}

GridSpec default_unlabeled_extension() {
    GridSpec g;
    g.bx_min = 1.0;
    g.bx_max = 1.5;
    g.bx_steps = 5;
    return g;
}

void validate(const GridSpec& spec) {
    if (spec.bx_steps < 1 || spec.bz_steps < 1) throw std::invalid_argument("grid steps must be >= 1");
    if (spec.bx_min > spec.bx_max || spec.bz_min > spec.bz_max) throw std::invalid_argument("grid min exceeds max");
    if (spec.bx_min < 0.0) throw std::invalid_argument("grid B_x must be non-negative");
}

std::vector<double> axis_values(double min, double max, int steps, bool closed) {
    std::vector<double> values;
    const double span = max - min;
    for (int i = 0; i < steps; ++i) {
        if (closed) {
            values.push_back(steps == 1 ? min : (i == steps - 1 ? max : min + span * i / (steps - 1)));
        } else {
            values.push_back(min + span * i / steps);
        }
    }
    return values;
}

std::vector<FieldPoint> make_grid(const GridSpec& spec) {
    validate(spec);
    std::vector<FieldPoint> points;
    for (double bx : axis_values(spec.bx_min, spec.bx_max, spec.bx_steps, spec.bx_closed)) {
        for (double bz : axis_values(spec.bz_min, spec.bz_max, spec.bz_steps, spec.bz_closed)) {
            points.push_back({bx, bz});
        }
    }
    return points;
}

std::vector<LabeledExample> solve_labels(std::span<const FieldPoint> points, int n_spins, double j_coupling,
                                         const SolverSettings& solver) {
    std::vector<LabeledExample> out;
    out.reserve(points.size());
    LanczosOptions options;
    options.tol = solver.tol;
    options.max_krylov = solver.max_krylov;
    options.seed = solver.seed;
    for (const auto& p : points) {
        const HamiltonianOperator h({n_spins, j_coupling, p.b_x, p.b_z});
        try {
            const EigenPair pair = lanczos_ground_state(h, options);
            out.push_back({p.b_x, p.b_z, pair.state, pair.energy});
        } catch (const DegenerateGroundStateError& e) {
            throw DegenerateGroundStateError(std::string(e.what()) + " at " + point_text(p.b_x, p.b_z), e.gap());
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(std::string(e.what()) + " at " + point_text(p.b_x, p.b_z), e.best_residual());
        }
    }
    return out;
}

void verify_label(const LabeledExample& example, int n_spins, double j_coupling, double max_residual) {
    const HamiltonianOperator h({n_spins, j_coupling, example.b_x, example.b_z});
    const auto& psi = example.psi;
    const std::string where = point_text(example.b_x, example.b_z);
    if (psi.size() != h.dimension()) throw std::runtime_error("label length mismatch at " + where);
    if (std::abs(psi.norm() - 1.0) > 1e-12) throw std::runtime_error("label is not unit norm at " + where);
    const double residual = (matvec(h, psi) - example.e0 * psi).norm();
    if (residual > max_residual) throw std::runtime_error("label residual too large at " + where);
    if (!(gauge_fix(psi) == psi)) throw std::runtime_error("label is not gauge fixed at " + where);
}

DataSplit split_dataset(std::span<const LabeledExample> grid, std::uint64_t split_seed) {
    // Bins in first-appearance order of B_x.
    std::vector<std::vector<std::size_t>> bins;
    std::vector<double> bin_bx;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto it = std::find_if(bin_bx.begin(), bin_bx.end(),
                               [&](double bx) { return std::abs(bx - grid[i].b_x) <= kBxTolerance; });
        if (it == bin_bx.end()) {
            bin_bx.push_back(grid[i].b_x);
            bins.emplace_back();
            bins.back().push_back(i);
        } else {
            bins[static_cast<std::size_t>(it - bin_bx.begin())].push_back(i);
        }
    }
    std::mt19937_64 rng(split_seed);
    DataSplit split;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const auto& members = bins[b];
        if (members.size() < 4) {
            std::ostringstream msg;
            msg << "B_x bin " << bin_bx[b] << " has " << members.size() << " points; a split needs at least 4";
            throw std::invalid_argument(msg.str());
        }
        std::vector<std::size_t> order(members.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<int> role(members.size(), 0);  // 0 pool, 1 test, 2 validation
        role[order[0]] = role[order[1]] = 1;
        role[order[2]] = role[order[3]] = 2;
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto& ex = grid[members[k]];
            (role[k] == 0 ? split.train_pool : role[k] == 1 ? split.test_seen : split.validation).push_back(ex);
        }
    }
    return split;
}

bool BxRange::contains(double b_x) const { return b_x >= lo - kBxTolerance && b_x < hi - kBxTolerance; }

Supervision assign_supervision(std::span<const LabeledExample> pool, std::span<const BxRange> labeled_ranges,
                               std::span<const BxRange> unlabeled_ranges) {
    for (const auto& a : labeled_ranges) {
        if (a.lo > a.hi) throw std::invalid_argument("B_x range with lo > hi");
        for (const auto& b : unlabeled_ranges) {
            if (b.lo > b.hi) throw std::invalid_argument("B_x range with lo > hi");
            if (a.lo < b.hi - kBxTolerance && b.lo < a.hi - kBxTolerance) {
                std::ostringstream msg;
                msg << "labeled range [" << a.lo << ", " << a.hi << ") overlaps unlabeled range [" << b.lo << ", "
                    << b.hi << ")";
                throw std::invalid_argument(msg.str());
            }
        }
    }
    const auto in_any = [](std::span<const BxRange> ranges, double bx) {
        return std::any_of(ranges.begin(), ranges.end(), [&](const BxRange& r) { return r.contains(bx); });
    };
    Supervision s;
    for (const auto& ex : pool) {
        if (in_any(labeled_ranges, ex.b_x)) {
            s.labeled.push_back(ex);
        } else if (in_any(unlabeled_ranges, ex.b_x)) {
            s.unlabeled.push_back({ex.b_x, ex.b_z});
        } else {
            ++s.excluded;
        }
    }
    return s;
}

DatasetBundle generate_bundle(const DatasetConfig& config) {
    check_spin_count(config.n_spins);
    DatasetBundle bundle;
    const double j = config.train_grid.j_coupling;
    if (config.unseen_grid.j_coupling != j) throw std::invalid_argument("grids disagree on J");

    const auto train_points = make_grid(config.train_grid);
    const auto labeled = solve_labels(train_points, config.n_spins, j, config.solver);
    auto split = split_dataset(labeled, config.split_seed);
    bundle.train_pool = std::move(split.train_pool);
    bundle.validation = std::move(split.validation);
    bundle.test_seen = std::move(split.test_seen);

    const auto unseen_points = make_grid(config.unseen_grid);
    bundle.test_unseen = solve_labels(unseen_points, config.n_spins, j, config.solver);

    if (config.unlabeled_extension) {
        for (const auto& p : make_grid(*config.unlabeled_extension)) {
            bundle.unlabeled_extension.push_back({p.b_x, p.b_z});
        }
    }
    bundle.manifest.config = config;
    bundle.manifest.train_pool = bundle.train_pool.size();
    bundle.manifest.validation = bundle.validation.size();
    bundle.manifest.test_seen = bundle.test_seen.size();
    bundle.manifest.test_unseen = bundle.test_unseen.size();
    bundle.manifest.unlabeled_extension = bundle.unlabeled_extension.size();
    bundle.manifest.content_hash = content_hash(bundle);
    return bundle;
}

std::string to_jsonl(std::span<const LabeledExample> examples) {
    std::string out;
    for (const auto& ex : examples) {
        out += "{\"bx\":";
        append_double(out, ex.b_x);
        out += ",\"bz\":";
        append_double(out, ex.b_z);
        out += ",\"e0\":";
        append_double(out, ex.e0);
        out += ",\"psi\":[";
        for (Eigen::Index i = 0; i < ex.psi.size(); ++i) {
            if (i) out += ',';
            append_double(out, ex.psi[i]);
        }
        out += "]}\n";
    }
    return out;
}

std::string to_jsonl(std::span<const UnlabeledExample> examples) {
    std::string out;
    for (const auto& ex : examples) {
        out += "{\"bx\":";
        append_double(out, ex.b_x);
        out += ",\"bz\":";
        append_double(out, ex.b_z);
        out += "}\n";
    }
    return out;
}

std::vector<LabeledExample> labeled_from_jsonl(const std::string& text) {
    std::vector<LabeledExample> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        require_known_keys(j, {"bx", "bz", "e0", "psi"}, "labeled record");
        LabeledExample ex;
        ex.b_x = j.at("bx").get<double>();
        ex.b_z = j.at("bz").get<double>();
        ex.e0 = j.at("e0").get<double>();
        const auto& psi = j.at("psi");
        ex.psi.resize(static_cast<Eigen::Index>(psi.size()));
        for (std::size_t i = 0; i < psi.size(); ++i) ex.psi[static_cast<Eigen::Index>(i)] = psi[i].get<double>();
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<UnlabeledExample> unlabeled_from_jsonl(const std::string& text) {
    std::vector<UnlabeledExample> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        require_known_keys(j, {"bx", "bz"}, "unlabeled record");
        out.push_back({j.at("bx").get<double>(), j.at("bz").get<double>()});
    }
    return out;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void require_known_keys(const nlohmann::json& object, std::initializer_list<const char*> allowed,
                        const std::string& where) {
    if (!object.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    for (const auto& [key, value] : object.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw std::invalid_argument("unknown key '" + key + "' in " + where);
        }
    }
}

nlohmann::json to_json(const GridSpec& s) {
    return {{"bx_min", s.bx_min}, {"bx_max", s.bx_max}, {"bx_steps", s.bx_steps}, {"bx_closed", s.bx_closed},
            {"bz_min", s.bz_min}, {"bz_max", s.bz_max}, {"bz_steps", s.bz_steps}, {"bz_closed", s.bz_closed},
            {"j_coupling", s.j_coupling}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
    require_known_keys(j, {"bx_min", "bx_max", "bx_steps", "bx_closed", "bz_min", "bz_max", "bz_steps", "bz_closed",
                           "j_coupling"},
                       "grid spec");
    GridSpec s;
    s.bx_min = j.value("bx_min", s.bx_min);
    s.bx_max = j.value("bx_max", s.bx_max);
    s.bx_steps = j.value("bx_steps", s.bx_steps);
    s.bx_closed = j.value("bx_closed", s.bx_closed);
    s.bz_min = j.value("bz_min", s.bz_min);
    s.bz_max = j.value("bz_max", s.bz_max);
    s.bz_steps = j.value("bz_steps", s.bz_steps);
    s.bz_closed = j.value("bz_closed", s.bz_closed);
    s.j_coupling = j.value("j_coupling", s.j_coupling);
    validate(s);
    return s;
}

nlohmann::json to_json(const DatasetConfig& c) {
    return {{"n_spins", c.n_spins},
            {"train_grid", to_json(c.train_grid)},
            {"unseen_grid", to_json(c.unseen_grid)},
            {"unlabeled_extension", c.unlabeled_extension ? to_json(*c.unlabeled_extension) : nlohmann::json(nullptr)},
            {"split_seed", c.split_seed},
            {"solver", {{"tol", c.solver.tol}, {"max_krylov", c.solver.max_krylov}, {"seed", c.solver.seed}}}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    require_known_keys(j, {"n_spins", "train_grid", "unseen_grid", "unlabeled_extension", "split_seed", "solver"},
                       "dataset config");
    DatasetConfig c;
    c.n_spins = j.value("n_spins", c.n_spins);
    if (j.contains("train_grid")) c.train_grid = grid_from_json(j.at("train_grid"));
    if (j.contains("unseen_grid")) c.unseen_grid = grid_from_json(j.at("unseen_grid"));
    if (j.contains("unlabeled_extension")) {
        const auto& ext = j.at("unlabeled_extension");
        c.unlabeled_extension = ext.is_null() ? std::nullopt : std::optional<GridSpec>(grid_from_json(ext));
    }
    c.split_seed = j.value("split_seed", c.split_seed);
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        require_known_keys(s, {"tol", "max_krylov", "seed"}, "solver settings");
        c.solver.tol = s.value("tol", c.solver.tol);
        c.solver.max_krylov = s.value("max_krylov", c.solver.max_krylov);
        c.solver.seed = s.value("seed", c.solver.seed);
    }
    return c;
}

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string contents[] = {to_jsonl(bundle.train_pool), to_jsonl(bundle.validation),
                                    to_jsonl(bundle.test_seen), to_jsonl(bundle.test_unseen),
                                    to_jsonl(bundle.unlabeled_extension)};
    std::string all;
    for (std::size_t i = 0; i < std::size(kSplitFiles); ++i) {
        write_file(dir / kSplitFiles[i], contents[i]);
        all += contents[i];
    }
    const auto& m = bundle.manifest;
    nlohmann::json manifest = {{"format", "pgmoe-dataset"},
                               {"version", 1},
                               {"config", to_json(m.config)},
                               {"counts",
                                {{"train_pool", bundle.train_pool.size()},
                                 {"validation", bundle.validation.size()},
                                 {"test_seen", bundle.test_seen.size()},
                                 {"test_unseen", bundle.test_unseen.size()},
                                 {"unlabeled_extension", bundle.unlabeled_extension.size()}}},
                               {"hash", fnv1a_hex(all)}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("format", "") != "pgmoe-dataset" || manifest.value("version", 0) != 1) {
        throw std::runtime_error(dir.string() + " does not hold a version-1 pgmoe dataset");
    }
    std::string contents[std::size(kSplitFiles)];
    std::string all;
    for (std::size_t i = 0; i < std::size(kSplitFiles); ++i) {
        contents[i] = read_file(dir / kSplitFiles[i]);
        all += contents[i];
    }
    const std::string hash = fnv1a_hex(all);
    if (hash != manifest.at("hash").get<std::string>()) {
        throw std::runtime_error("dataset content hash mismatch in " + dir.string());
    }
    DatasetBundle b;
    b.manifest.config = dataset_config_from_json(manifest.at("config"));
    b.manifest.content_hash = hash;
    b.train_pool = labeled_from_jsonl(contents[0]);
    b.validation = labeled_from_jsonl(contents[1]);
    b.test_seen = labeled_from_jsonl(contents[2]);
    b.test_unseen = labeled_from_jsonl(contents[3]);
    b.unlabeled_extension = unlabeled_from_jsonl(contents[4]);
    const auto& counts = manifest.at("counts");
    b.manifest.train_pool = counts.at("train_pool").get<std::size_t>();
    b.manifest.validation = counts.at("validation").get<std::size_t>();
    b.manifest.test_seen = counts.at("test_seen").get<std::size_t>();
    b.manifest.test_unseen = counts.at("test_unseen").get<std::size_t>();
    b.manifest.unlabeled_extension = counts.at("unlabeled_extension").get<std::size_t>();
    if (b.manifest.train_pool != b.train_pool.size() || b.manifest.validation != b.validation.size() ||
        b.manifest.test_seen != b.test_seen.size() || b.manifest.test_unseen != b.test_unseen.size() ||
        b.manifest.unlabeled_extension != b.unlabeled_extension.size()) {
        throw std::runtime_error("dataset counts disagree with manifest in " + dir.string());
    }
    return b;
}

}  // namespace pgmoe
