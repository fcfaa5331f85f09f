#include "pgmoe/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pgmoe/errors.hpp"

namespace pgmoe {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string exact(double v) { return fmt("%.17g", v); }

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

nlohmann::json ranges_to_json(const std::vector<BxRange>& ranges) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : ranges) arr.push_back({r.lo, r.hi});
    return arr;
}

std::vector<BxRange> ranges_from_json(const nlohmann::json& j) {
    std::vector<BxRange> out;
    for (const auto& r : j) {
        if (!r.is_array() || r.size() != 2) throw std::invalid_argument("B_x ranges are [lo, hi] pairs");
        out.push_back({r[0].get<double>(), r[1].get<double>()});
    }
    return out;
}

nlohmann::json intervals_json(const std::vector<SzInterval>& intervals) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& i : intervals) arr.push_back({{"expert", i.expert}, {"sz_min", i.sz_min}, {"sz_max", i.sz_max}});
    return arr;
}

const char* phase_name(LossPhase p) { return p == LossPhase::warmup ? "warmup" : "full"; }

SzPartition partition_for(const RunConfig& config) {
    return config.model.partition.empty() ? single_expert_partition(config.n_spins)
                                          : build_partition(config.n_spins, config.model.partition);
}

}  // namespace

// ------------------------------------------------------------------ config

RunConfig default_pgmoe_config() { return RunConfig{}; }

RunConfig default_baseline_config() {
    RunConfig c;
    c.model.kind = "baseline";
    c.model.hidden_layers = 2;
    c.model.hidden_width = 2000;
    c.model.partition.clear();
    c.weights = {1.0, 100.0};
    c.schedule.pg_start_epoch = 80;
    c.schedule.max_epochs = 300;
    return c;
}

void validate(const RunConfig& c) {
    SystemParams probe{c.n_spins, c.j_coupling, 0.0, 0.0};
    pgmoe::validate(probe);
    if (c.dataset.n_spins != c.n_spins) throw std::invalid_argument("dataset and system disagree on n_spins");
    if (c.schedule.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (c.schedule.pg_start_epoch < 0 || c.schedule.pg_start_epoch > c.schedule.max_epochs) {
        throw std::invalid_argument("pg_start_epoch must lie in [0, max_epochs]");
    }
    if (c.schedule.early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
    if (c.optimizer.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (c.weights.lambda_cs < 0.0 || c.weights.lambda_pg < 0.0) throw std::invalid_argument("loss weights must be >= 0");
    if (c.weights.lambda_cs == 0.0 && c.weights.lambda_pg == 0.0) {
        throw std::invalid_argument("loss weights cannot both be zero");
    }
    // Constructors validate the remaining optimizer fields.
    SgdMomentum probe_opt(c.optimizer.learning_rate, c.optimizer.momentum);
    PlateauDecay probe_decay(c.optimizer.decay_factor, c.optimizer.plateau_patience);
    (void)probe_opt;
    (void)probe_decay;
    if (c.model.kind == "pgmoe") {
        (void)partition_for(c);
    } else if (c.model.kind == "baseline") {
        if (c.model.featurization == Featurization::fields_only && c.model.input_width != 2) {
            throw std::invalid_argument("fields_only featurization needs input_width 2");
        }
    } else {
        throw std::invalid_argument("unknown model kind: " + c.model.kind);
    }
    ArchitectureConfig arch{2, c.model.hidden_layers, c.model.hidden_width, 1};
    pgmoe::validate(arch);
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json dataset = to_json(c.dataset);
    dataset.erase("n_spins");
    dataset.erase("split_seed");
    return {
        {"system", {{"n_spins", c.n_spins}, {"j_coupling", c.j_coupling}}},
        {"dataset", dataset},
        {"model",
         {{"kind", c.model.kind},
          {"hidden_layers", c.model.hidden_layers},
          {"hidden_width", c.model.hidden_width},
          {"partition", intervals_json(c.model.partition)},
          {"featurization", to_string(c.model.featurization)},
          {"input_width", c.model.input_width}}},
        {"supervision",
         {{"labeled_bx", ranges_to_json(c.supervision.labeled)},
          {"unlabeled_bx", ranges_to_json(c.supervision.unlabeled)},
          {"unlabeled_limit", c.supervision.unlabeled_limit ? nlohmann::json(*c.supervision.unlabeled_limit)
                                                            : nlohmann::json(nullptr)}}},
        {"loss", {{"lambda_cs", c.weights.lambda_cs}, {"lambda_pg", c.weights.lambda_pg}}},
        {"optimizer",
         {{"learning_rate", c.optimizer.learning_rate},
          {"momentum", c.optimizer.momentum},
          {"batch_size", c.optimizer.batch_size},
          {"decay_factor", c.optimizer.decay_factor},
          {"plateau_patience", c.optimizer.plateau_patience}}},
        {"schedule",
         {{"max_epochs", c.schedule.max_epochs},
          {"pg_start_epoch", c.schedule.pg_start_epoch},
          {"early_stop_patience", c.schedule.early_stop_patience}}},
        {"seeds", {{"init", c.seeds.init}, {"split", c.seeds.split}, {"data_order", c.seeds.data_order}}},
    };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    require_known_keys(j, {"system", "dataset", "model", "supervision", "loss", "optimizer", "schedule", "seeds"},
                       "run config");
    RunConfig c;
    if (j.contains("system")) {
        const auto& s = j.at("system");
        require_known_keys(s, {"n_spins", "j_coupling"}, "system");
        c.n_spins = s.value("n_spins", c.n_spins);
        c.j_coupling = s.value("j_coupling", c.j_coupling);
    }
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        require_known_keys(s, {"init", "split", "data_order"}, "seeds");
        c.seeds.init = s.value("init", c.seeds.init);
        c.seeds.split = s.value("split", c.seeds.split);
        c.seeds.data_order = s.value("data_order", c.seeds.data_order);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.dataset = dataset_config_from_json(d);
        if (d.contains("n_spins") && c.dataset.n_spins != c.n_spins) {
            throw std::invalid_argument("dataset.n_spins disagrees with system.n_spins");
        }
        if (d.contains("split_seed") && c.dataset.split_seed != c.seeds.split) {
            throw std::invalid_argument("dataset.split_seed disagrees with seeds.split");
        }
    }
    c.dataset.n_spins = c.n_spins;
    c.dataset.split_seed = c.seeds.split;
    c.dataset.train_grid.j_coupling = c.j_coupling;
    c.dataset.unseen_grid.j_coupling = c.j_coupling;
    if (c.dataset.unlabeled_extension) c.dataset.unlabeled_extension->j_coupling = c.j_coupling;

    if (j.contains("model")) {
        const auto& m = j.at("model");
        require_known_keys(m, {"kind", "hidden_layers", "hidden_width", "partition", "featurization", "input_width"},
                           "model");
        c.model.kind = m.value("kind", c.model.kind);
        if (c.model.kind == "baseline") c.model.partition.clear();
        c.model.hidden_layers = m.value("hidden_layers", c.model.hidden_layers);
        c.model.hidden_width = m.value("hidden_width", c.model.hidden_width);
        if (m.contains("partition")) c.model.partition = intervals_from_json(m.at("partition").dump());
        if (m.contains("featurization")) c.model.featurization = featurization_from_string(m.at("featurization"));
        c.model.input_width = m.value("input_width", c.model.input_width);
    }
    if (j.contains("supervision")) {
        const auto& s = j.at("supervision");
        require_known_keys(s, {"labeled_bx", "unlabeled_bx", "unlabeled_limit"}, "supervision");
        if (s.contains("labeled_bx")) c.supervision.labeled = ranges_from_json(s.at("labeled_bx"));
        if (s.contains("unlabeled_bx")) c.supervision.unlabeled = ranges_from_json(s.at("unlabeled_bx"));
        if (s.contains("unlabeled_limit") && !s.at("unlabeled_limit").is_null()) {
            c.supervision.unlabeled_limit = s.at("unlabeled_limit").get<std::size_t>();
        }
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        require_known_keys(l, {"lambda_cs", "lambda_pg"}, "loss");
        c.weights.lambda_cs = l.value("lambda_cs", c.weights.lambda_cs);
        c.weights.lambda_pg = l.value("lambda_pg", c.weights.lambda_pg);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        require_known_keys(o, {"learning_rate", "momentum", "batch_size", "decay_factor", "plateau_patience"},
                           "optimizer");
        c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
        c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
        c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
        c.optimizer.decay_factor = o.value("decay_factor", c.optimizer.decay_factor);
        c.optimizer.plateau_patience = o.value("plateau_patience", c.optimizer.plateau_patience);
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        require_known_keys(s, {"max_epochs", "pg_start_epoch", "early_stop_patience"}, "schedule");
        c.schedule.max_epochs = s.value("max_epochs", c.schedule.max_epochs);
        c.schedule.pg_start_epoch = s.value("pg_start_epoch", c.schedule.pg_start_epoch);
        c.schedule.early_stop_patience = s.value("early_stop_patience", c.schedule.early_stop_patience);
    }
    validate(c);
    return c;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(nlohmann::json::parse(read_text(path))); }

std::unique_ptr<WavefunctionModel> make_model(const RunConfig& c) {
    if (c.model.kind == "pgmoe") {
        return std::make_unique<MoeModel>(partition_for(c), c.model.hidden_layers, c.model.hidden_width, c.seeds.init);
    }
    if (c.model.kind == "baseline") {
        return std::make_unique<BaselineModel>(c.n_spins, c.model.hidden_layers, c.model.hidden_width,
                                               c.model.featurization, c.model.input_width, c.seeds.init);
    }
    throw std::invalid_argument("unknown model kind: " + c.model.kind);
}

// ------------------------------------------------------------------ training

Supervision training_data(const RunConfig& config, const DatasetBundle& bundle) {
    Supervision s = assign_supervision(bundle.train_pool, config.supervision.labeled, config.supervision.unlabeled);
    for (const auto& ex : bundle.unlabeled_extension) {
        const bool in_unlabeled = std::any_of(config.supervision.unlabeled.begin(), config.supervision.unlabeled.end(),
                                              [&](const BxRange& r) { return r.contains(ex.b_x); });
        if (in_unlabeled) s.unlabeled.push_back(ex);
    }
    std::stable_sort(s.unlabeled.begin(), s.unlabeled.end(), [](const UnlabeledExample& a, const UnlabeledExample& b) {
        return a.b_x != b.b_x ? a.b_x < b.b_x : a.b_z < b.b_z;
    });
    if (config.supervision.unlabeled_limit && s.unlabeled.size() > *config.supervision.unlabeled_limit) {
        s.excluded += s.unlabeled.size() - *config.supervision.unlabeled_limit;
        s.unlabeled.resize(*config.supervision.unlabeled_limit);
    }
    return s;
}

TrainResult train(const RunConfig& config, const DatasetBundle& bundle, const TrainOptions& options) {
    validate(config);
    if (bundle.n_spins() != config.n_spins) {
        throw std::invalid_argument("dataset holds " + std::to_string(bundle.n_spins()) + "-spin data, config expects " +
                                    std::to_string(config.n_spins));
    }
    if (bundle.manifest.config.split_seed != config.seeds.split) {
        throw std::invalid_argument("dataset split seed differs from the config's split seed");
    }
    if (bundle.validation.empty()) throw std::invalid_argument("dataset has no validation split");

    const auto start = std::chrono::steady_clock::now();
    auto model = make_model(config);
    const Supervision data = training_data(config, bundle);
    const bool use_unlabeled = config.weights.lambda_pg != 0.0;
    if (data.labeled.empty() && !(use_unlabeled && !data.unlabeled.empty())) {
        throw std::invalid_argument("no training data selected by the supervision ranges");
    }

    TrainingLog log;
    if (config.schedule.pg_start_epoch == 0 && config.weights.lambda_pg != 0.0) {
        log.warnings.push_back("pg_start_epoch = 0: the physics loss is active from the first epoch");
        std::cerr << "warning: " << log.warnings.back() << "\n";
    }

    std::vector<HamiltonianOperator> labeled_h;
    std::vector<HamiltonianOperator> unlabeled_h;
    for (const auto& ex : data.labeled) labeled_h.emplace_back(SystemParams{config.n_spins, config.j_coupling, ex.b_x, ex.b_z});
    for (const auto& ex : data.unlabeled) unlabeled_h.emplace_back(SystemParams{config.n_spins, config.j_coupling, ex.b_x, ex.b_z});

    std::vector<FieldPoint> val_points;
    for (const auto& ex : bundle.validation) val_points.push_back(ex.point());

    SgdMomentum optimizer(config.optimizer.learning_rate, config.optimizer.momentum);
    PlateauDecay plateau(config.optimizer.decay_factor, config.optimizer.plateau_patience);
    EarlyStopping early(config.schedule.early_stop_patience);
    std::mt19937_64 rng(config.seeds.data_order);
    auto best = model->clone();

    struct StreamItem {
        bool labeled;
        std::size_t index;
    };
    const auto batch_size = static_cast<std::size_t>(config.optimizer.batch_size);

    for (int e = 0; e < config.schedule.max_epochs; ++e) {
        const LossPhase phase = e < config.schedule.pg_start_epoch ? LossPhase::warmup : LossPhase::full;
        // Early stopping may not cut the warmup short; patience counts from the loss switch.
        if (e == config.schedule.pg_start_epoch) early.restart_patience();
        const bool with_unlabeled = phase == LossPhase::full && use_unlabeled;
        std::vector<StreamItem> stream;
        for (std::size_t i = 0; i < data.labeled.size(); ++i) stream.push_back({true, i});
        if (with_unlabeled) {
            for (std::size_t i = 0; i < data.unlabeled.size(); ++i) stream.push_back({false, i});
        }
        std::shuffle(stream.begin(), stream.end(), rng);

        EpochRecord rec;
        rec.epoch = e + 1;
        rec.phase = phase;
        rec.skipped_unlabeled = with_unlabeled ? 0 : data.unlabeled.size();
        std::size_t contributing = 0;
        for (std::size_t pos = 0; pos < stream.size(); pos += batch_size) {
            const std::size_t end = std::min(stream.size(), pos + batch_size);
            std::vector<FieldPoint> points;
            std::vector<LossItem> items;
            for (std::size_t k = pos; k < end; ++k) {
                const auto& it = stream[k];
                if (it.labeled) {
                    const auto& ex = data.labeled[it.index];
                    points.push_back(ex.point());
                    items.push_back({&ex.psi, &labeled_h[it.index]});
                    ++rec.labeled_items;
                } else {
                    points.push_back(data.unlabeled[it.index].point());
                    items.push_back({nullptr, &unlabeled_h[it.index]});
                    ++rec.unlabeled_items;
                }
            }
            const ModelPrediction pred = model->predict(points, true);
            LossReport report;
            try {
                report = combined_loss(pred.psi_hat, items, config.weights, phase);
            } catch (const NumericalDegeneracyError& err) {
                std::ostringstream msg;
                msg << "epoch " << e + 1 << ", batch " << pos / batch_size << ": " << err.what();
                throw NumericalDegeneracyError(msg.str(), err.batch_index());
            }
            if (options.on_batch) options.on_batch(e + 1, report);
            if (report.batch_size == 0) continue;
            const auto grads = model->backward(pred, report.gradient);
            optimizer.step(model->networks(), grads);
            const auto w = static_cast<double>(report.batch_size);
            rec.train_cs += w * report.cs_value;
            rec.train_pg += w * report.pg_value;
            rec.train_loss += w * report.combined;
            contributing += report.batch_size;
        }
        if (contributing > 0) {
            rec.train_cs /= static_cast<double>(contributing);
            rec.train_pg /= static_cast<double>(contributing);
            rec.train_loss /= static_cast<double>(contributing);
        }

        const ModelPrediction val = model->predict(val_points, false);
        double cs_sum = 0.0;
        for (std::size_t i = 0; i < val_points.size(); ++i) {
            cs_sum += cosine_similarity(val.psi_hat[i], bundle.validation[i].psi);
        }
        rec.val_mean_cs = cs_sum / static_cast<double>(val_points.size());
        rec.val_cs_loss = 1.0 - rec.val_mean_cs;
        // lr used during this epoch
        rec.learning_rate = optimizer.learning_rate();

        plateau.observe(rec.val_cs_loss, optimizer);
        const bool stop = early.observe(rec.val_mean_cs) && phase == LossPhase::full;
        if (early.improved_last()) {
            best = model->clone();
            log.best_epoch = e + 1;
        }
        log.epochs.push_back(rec);
        log.stop_epoch = e + 1;
        if (options.on_epoch) options.on_epoch(rec);
        if (stop) {
            log.stop_reason = "early_stop";
            break;
        }
    }
    if (log.stop_reason.empty()) log.stop_reason = "max_epochs";
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return TrainResult{std::move(best), std::move(log)};
}

// ------------------------------------------------------------------ evaluation

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_std of an empty set");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

EvalReport evaluate(const WavefunctionModel& model, std::span<const LabeledExample> examples,
                    const std::string& dataset_id) {
    if (examples.empty()) throw std::invalid_argument("evaluate: dataset '" + dataset_id + "' is empty");
    EvalReport report;
    report.dataset_id = dataset_id;
    constexpr std::size_t kChunk = 16;
    std::vector<double> values;
    for (std::size_t pos = 0; pos < examples.size(); pos += kChunk) {
        const std::size_t end = std::min(examples.size(), pos + kChunk);
        std::vector<FieldPoint> points;
        for (std::size_t i = pos; i < end; ++i) points.push_back(examples[i].point());
        const auto pred = model.predict(points, false);
        for (std::size_t i = pos; i < end; ++i) {
            if (examples[i].psi.size() == 0) {
                throw std::invalid_argument("evaluate: dataset '" + dataset_id + "' has unlabeled points");
            }
            const double cs = cosine_similarity(pred.psi_hat[i - pos], examples[i].psi);
            report.rows.push_back({examples[i].b_x, examples[i].b_z, cs});
            values.push_back(cs);
        }
    }
    const auto ms = mean_std(values);
    report.mean_cs = ms.mean;
    report.std_cs = ms.std;
    return report;
}

std::string eval_to_csv(const EvalReport& report) {
    std::string out = "b_x,b_z,cs\n";
    for (const auto& r : report.rows) out += exact(r.b_x) + "," + exact(r.b_z) + "," + exact(r.cs) + "\n";
    return out;
}

EvalReport eval_from_csv(const std::string& text, const std::string& dataset_id) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "b_x,b_z,cs") throw std::runtime_error("not an evaluation CSV");
    EvalReport report;
    report.dataset_id = dataset_id;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EvalRow row;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &row.b_x, &row.b_z, &row.cs) != 3) {
            throw std::runtime_error("malformed evaluation row: " + line);
        }
        report.rows.push_back(row);
        values.push_back(row.cs);
    }
    if (values.empty()) throw std::runtime_error("evaluation CSV has no rows");
    const auto ms = mean_std(values);
    report.mean_cs = ms.mean;
    report.std_cs = ms.std;
    return report;
}

// ------------------------------------------------------------------ runs

// Bumped whenever training semantics change, so cached runs are not reused.
constexpr const char* kTrainingRevision = "2";

std::string config_hash(const RunConfig& config, const DatasetBundle& bundle) {
    return fnv1a_hex(to_json(config).dump() + "|" + bundle.manifest.content_hash + "|" + kTrainingRevision);
}

namespace {

std::string log_to_csv(const TrainingLog& log) {
    std::string out = "epoch,phase,train_cs,train_pg,train_loss,val_mean_cs,val_cs_loss,lr,labeled,unlabeled,skipped\n";
    for (const auto& r : log.epochs) {
        out += std::to_string(r.epoch) + "," + phase_name(r.phase) + "," + exact(r.train_cs) + "," +
               exact(r.train_pg) + "," + exact(r.train_loss) + "," + exact(r.val_mean_cs) + "," +
               exact(r.val_cs_loss) + "," + exact(r.learning_rate) + "," + std::to_string(r.labeled_items) + "," +
               std::to_string(r.unlabeled_items) + "," + std::to_string(r.skipped_unlabeled) + "\n";
    }
    return out;
}

nlohmann::json summary_json(const RunSummary& s) {
    return {{"seed", s.seed},
            {"config_hash", s.config_hash},
            {"mean_cs_seen", s.mean_cs_seen},
            {"std_cs_seen", s.std_cs_seen},
            {"mean_cs_unseen", s.mean_cs_unseen},
            {"std_cs_unseen", s.std_cs_unseen},
            {"best_epoch", s.best_epoch},
            {"stop_epoch", s.stop_epoch},
            {"stop_reason", s.stop_reason},
            {"param_count", s.param_count},
            {"wall_seconds", s.wall_seconds}};
}

const char* const kRunFiles[] = {"config.json", "log.csv", "model.ckpt", "eval_test_seen.csv", "eval_test_unseen.csv",
                                 "summary.json"};

}  // namespace

RunSummary load_run_summary(const fs::path& dir) {
    for (const char* f : kRunFiles) {
        if (!fs::exists(dir / f)) throw std::runtime_error("run directory " + dir.string() + " is missing " + f);
    }
    const auto j = nlohmann::json::parse(read_text(dir / "summary.json"));
    RunSummary s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.config_hash = j.at("config_hash").get<std::string>();
    s.mean_cs_seen = j.at("mean_cs_seen").get<double>();
    s.std_cs_seen = j.at("std_cs_seen").get<double>();
    s.mean_cs_unseen = j.at("mean_cs_unseen").get<double>();
    s.std_cs_unseen = j.at("std_cs_unseen").get<double>();
    s.best_epoch = j.at("best_epoch").get<int>();
    s.stop_epoch = j.at("stop_epoch").get<int>();
    s.stop_reason = j.at("stop_reason").get<std::string>();
    s.param_count = j.at("param_count").get<std::size_t>();
    s.wall_seconds = j.at("wall_seconds").get<double>();
    s.dir = dir;
    return s;
}

RunSummary run_experiment(const RunConfig& config, const DatasetBundle& bundle, const fs::path& dir, bool reuse,
                          const TrainOptions& options) {
    const std::string hash = config_hash(config, bundle);
    if (reuse && fs::exists(dir / "summary.json")) {
        try {
            RunSummary cached = load_run_summary(dir);
            if (cached.config_hash == hash) return cached;
        } catch (const std::exception&) {
            // incomplete or foreign run: retrain below
        }
    }
    fs::create_directories(dir);
    fs::remove(dir / "summary.json");
    write_text(dir / "config.json", to_json(config).dump(2) + "\n");

    TrainResult result = train(config, bundle, options);
    CheckpointMeta meta{config.seeds.init, config.seeds.split, config.seeds.data_order,
                        {{"best_epoch", result.log.best_epoch}, {"config_hash", hash}}};
    save_checkpoint(dir / "model.ckpt", *result.model, meta);
    write_text(dir / "log.csv", log_to_csv(result.log));

    const EvalReport seen = evaluate(*result.model, bundle.test_seen, "test_seen");
    const EvalReport unseen = evaluate(*result.model, bundle.test_unseen, "test_unseen");
    write_text(dir / "eval_test_seen.csv", eval_to_csv(seen));
    write_text(dir / "eval_test_unseen.csv", eval_to_csv(unseen));

    RunSummary s;
    s.seed = config.seeds.init;
    s.config_hash = hash;
    s.mean_cs_seen = seen.mean_cs;
    s.std_cs_seen = seen.std_cs;
    s.mean_cs_unseen = unseen.mean_cs;
    s.std_cs_unseen = unseen.std_cs;
    s.best_epoch = result.log.best_epoch;
    s.stop_epoch = result.log.stop_epoch;
    s.stop_reason = result.log.stop_reason;
    s.param_count = result.model->count_parameters();
    s.wall_seconds = result.log.wall_seconds;
    s.dir = dir;
    // Written last: its presence marks a complete run.
    write_text(dir / "summary.json", summary_json(s).dump(2) + "\n");
    return s;
}

AggregateMode aggregate_mode_from_string(const std::string& name) {
    if (name == "mean_std") return AggregateMode::mean_std;
    if (name == "best") return AggregateMode::best;
    throw std::invalid_argument("unknown aggregation mode: " + name);
}

AggregateReport aggregate(const std::string& variant, std::vector<RunSummary> runs, AggregateMode mode) {
    if (runs.empty()) throw std::invalid_argument("aggregate: no completed runs for " + variant);
    AggregateReport r;
    r.variant = variant;
    r.seed_count = runs.size();
    r.param_count = runs.front().param_count;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].mean_cs_unseen > runs[r.best_run].mean_cs_unseen) r.best_run = i;
    }
    if (mode == AggregateMode::mean_std) {
        std::vector<double> seen, unseen, stops;
        for (const auto& s : runs) {
            seen.push_back(s.mean_cs_seen);
            unseen.push_back(s.mean_cs_unseen);
            stops.push_back(static_cast<double>(s.stop_epoch));
        }
        const auto a = mean_std(seen);
        const auto b = mean_std(unseen);
        r.mean_cs_seen = a.mean;
        r.std_cs_seen = a.std;
        r.mean_cs_unseen = b.mean;
        r.std_cs_unseen = b.std;
        r.stop_epoch = mean_std(stops).mean;
    } else {
        const auto& best = runs[r.best_run];
        r.mean_cs_seen = best.mean_cs_seen;
        r.mean_cs_unseen = best.mean_cs_unseen;
        r.stop_epoch = best.stop_epoch;
    }
    r.runs = std::move(runs);
    return r;
}

std::vector<std::uint64_t> default_seeds(std::size_t count) {
    // Spaced apart so per-expert seeds (seed + expert index) never collide across runs.
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < count; ++i) seeds.push_back(101 * (i + 1));
    return seeds;
}

AggregateReport multi_seed(const RunConfig& config, const DatasetBundle& bundle, std::span<const std::uint64_t> seeds,
                           AggregateMode mode, const fs::path& dir, const std::string& variant, bool reuse) {
    if (seeds.empty()) throw std::invalid_argument("multi_seed needs at least one seed");
    std::vector<RunSummary> runs;
    std::vector<std::string> failures;
    for (const auto seed : seeds) {
        RunConfig c = config;
        c.seeds.init = seed;
        c.seeds.data_order = seed;
        try {
            runs.push_back(run_experiment(c, bundle, dir / ("seed_" + std::to_string(seed)), reuse));
        } catch (const Error& e) {
            failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
            std::cerr << "run failed: " << failures.back() << "\n";
        }
    }
    if (runs.empty()) {
        AggregateReport r;
        r.variant = variant;
        r.failures = std::move(failures);
        return r;
    }
    AggregateReport r = aggregate(variant, std::move(runs), mode);
    r.failures = std::move(failures);
    return r;
}

std::string metrics_csv_header() {
    return "variant,seed_count,mean_cs_seen,std_cs_seen,mean_cs_unseen,std_cs_unseen,stop_epoch,param_count\n";
}

std::string metrics_csv_row(const AggregateReport& r) {
    return r.variant + "," + std::to_string(r.seed_count) + "," + fmt("%.6f", r.mean_cs_seen) + "," +
           fmt("%.6f", r.std_cs_seen) + "," + fmt("%.6f", r.mean_cs_unseen) + "," + fmt("%.6f", r.std_cs_unseen) +
           "," + fmt("%.1f", r.stop_epoch) + "," + std::to_string(r.param_count) + "\n";
}

// ------------------------------------------------------------------ ablations

AblationKind ablation_kind_from_string(const std::string& name) {
    if (name == "decomposition") return AblationKind::decomposition;
    if (name == "unlabeled_sweep") return AblationKind::unlabeled_sweep;
    if (name == "labeled_sweep") return AblationKind::labeled_sweep;
    if (name == "hyperparams") return AblationKind::hyperparams;
    throw std::invalid_argument("unknown ablation kind: " + name);
}

namespace {

std::vector<SzInterval> singletons(std::initializer_list<std::initializer_list<double>> groups) {
    std::vector<SzInterval> out;
    int e = 0;
    for (const auto& g : groups) {
        for (double sz : g) out.push_back({e, sz, sz});
        ++e;
    }
    return out;
}

std::vector<AblationVariant> decomposition_variants(const RunConfig& base) {
    const int n = base.n_spins;
    if (n % 2 != 0 || n < 6) throw std::invalid_argument("decomposition ablation needs an even chain of >= 6 spins");
    const double h = 0.5 * n;
    std::vector<SzInterval> random;
    if (n == 10) {
        // Fixed non-contiguous grouping for the random S_z -> expert row.
        random = singletons({{-3, -2, 1, 5}, {-4, 0, 4}, {-5, -1, 2, 3}});
    } else {
        random = build_random_partition(n, 3, base.seeds.split).intervals();
    }
    const std::vector<std::pair<std::string, std::vector<SzInterval>>> rows = {
        {"Random", random},
        {"Only-1", {{0, -h, h}}},
        {"PG-MoE1", {{0, -h, -1}, {1, 0, h}}},
        {"PG-MoE2", {{0, -h, -1}, {1, 0, 0}, {2, 1, h}}},
        {"PG-MoE3", {{0, -h, 0}, {1, 1, h - 2}, {2, h - 1, h}}},
        {"PG-MoE4", {{0, -h, 0}, {1, 1, h - 2}, {2, h - 1, h - 1}, {3, h, h}}},
    };
    std::vector<AblationVariant> out;
    for (const auto& [name, intervals] : rows) {
        RunConfig c = base;
        c.model.kind = "pgmoe";
        c.model.partition = intervals;
        out.push_back({name, c});
    }
    return out;
}

}  // namespace

std::vector<AblationVariant> ablation_variants(AblationKind kind, const RunConfig& base, const DatasetBundle& bundle) {
    std::vector<AblationVariant> out;
    switch (kind) {
        case AblationKind::decomposition:
            return decomposition_variants(base);
        case AblationKind::labeled_sweep: {
            struct Row {
                const char* name;
                std::vector<BxRange> labeled;
                std::vector<BxRange> unlabeled;
            };
            const std::vector<Row> rows = {
                {"DL260_0-1.0", {{0.0, 1.0}}, {}},
                {"DL156_0-0.3+0.7-1", {{0.0, 0.3}, {0.7, 1.0}}, {{0.3, 0.7}}},
                {"DL234_0-0.9", {{0.0, 0.9}}, {{0.9, 1.0}}},
                {"DL208_0-0.8", {{0.0, 0.8}}, {{0.8, 1.0}}},
                {"DL182_0-0.7", {{0.0, 0.7}}, {{0.7, 1.0}}},
                {"DL156_0-0.6", {{0.0, 0.6}}, {{0.6, 1.0}}},
                {"DL130_0-0.5", {{0.0, 0.5}}, {{0.5, 1.0}}},
            };
            for (const auto& r : rows) {
                RunConfig c = base;
                c.supervision.labeled = r.labeled;
                c.supervision.unlabeled = r.unlabeled;
                c.supervision.unlabeled_limit.reset();
                out.push_back({r.name, c});
            }
            return out;
        }
        case AblationKind::unlabeled_sweep: {
            RunConfig probe = base;
            probe.supervision.unlabeled = {{0.5, 1.5}};
            probe.supervision.unlabeled_limit.reset();
            const std::size_t available = training_data(probe, bundle).unlabeled.size();
            std::set<std::size_t> seen;
            for (std::size_t size : {0u, 65u, 130u, 195u, 260u}) {
                const std::size_t k = std::min(size, available);
                if (!seen.insert(k).second) continue;
                RunConfig c = probe;
                c.supervision.unlabeled_limit = k;
                out.push_back({"UL" + std::to_string(k), c});
            }
            return out;
        }
        case AblationKind::hyperparams: {
            out.push_back({"base", base});
            const auto with = [&](const std::string& name, auto mutate) {
                RunConfig c = base;
                mutate(c);
                out.push_back({name, c});
            };
            with("lr=0.0002", [](RunConfig& c) { c.optimizer.learning_rate = 0.0002; });
            with("lr=0.0004", [](RunConfig& c) { c.optimizer.learning_rate = 0.0004; });
            with("pge=0", [](RunConfig& c) { c.schedule.pg_start_epoch = 0; });
            with("pge=30", [](RunConfig& c) { c.schedule.pg_start_epoch = 30; });
            with("gamma=0", [](RunConfig& c) { c.optimizer.decay_factor = 0.0; });
            with("gamma=0.9", [](RunConfig& c) { c.optimizer.decay_factor = 0.9; });
            with("gamma=0.985", [](RunConfig& c) { c.optimizer.decay_factor = 0.985; });
            with("mom=0", [](RunConfig& c) { c.optimizer.momentum = 0.0; });
            with("mom=0.9", [](RunConfig& c) { c.optimizer.momentum = 0.9; });
            with("lambda=(1;1)", [](RunConfig& c) { c.weights = {1.0, 1.0}; });
            with("lambda=(100;50)", [](RunConfig& c) { c.weights = {100.0, 50.0}; });
            with("lambda=(100;100)", [](RunConfig& c) { c.weights = {100.0, 100.0}; });
            with("lambda=(50;200)", [](RunConfig& c) { c.weights = {50.0, 200.0}; });
            return out;
        }
    }
    throw std::invalid_argument("unknown ablation kind");
}

std::vector<AggregateReport> ablate(AblationKind kind, const RunConfig& base, const DatasetBundle& bundle,
                                    std::span<const std::uint64_t> seeds, const fs::path& dir) {
    std::vector<AggregateReport> reports;
    for (const auto& v : ablation_variants(kind, base, bundle)) {
        reports.push_back(multi_seed(v.config, bundle, seeds, AggregateMode::mean_std, dir / v.name, v.name));
    }
    return reports;
}

// ------------------------------------------------------------------ reports

std::string cs_grid_csv(const EvalReport& unseen) {
    std::set<double> bxs, bzs;
    std::map<std::pair<double, double>, double> cell;
    for (const auto& r : unseen.rows) {
        bxs.insert(r.b_x);
        bzs.insert(r.b_z);
        cell[{r.b_x, r.b_z}] = r.cs;
    }
    std::string out = "b_z\\b_x";
    for (double bx : bxs) out += "," + fmt("%.6g", bx);
    out += "\n";
    for (double bz : bzs) {
        out += fmt("%.6g", bz);
        for (double bx : bxs) {
            const auto it = cell.find({bx, bz});
            out += ",";
            if (it != cell.end()) out += fmt("%.6f", it->second);
        }
        out += "\n";
    }
    return out;
}

ReportFiles report(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) throw std::runtime_error("run directory does not exist: " + run_dir.string());
    std::vector<fs::path> summaries;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "summary.json") summaries.push_back(entry.path());
    }
    if (summaries.empty()) throw std::runtime_error("no completed runs under " + run_dir.string());
    std::sort(summaries.begin(), summaries.end());

    // Runs sharing a parent directory are seeds of one variant.
    std::map<fs::path, std::vector<RunSummary>> groups;
    for (const auto& s : summaries) {
        const fs::path dir = s.parent_path();
        const fs::path variant_dir = dir == run_dir ? dir : dir.parent_path();
        groups[variant_dir].push_back(load_run_summary(dir));
    }
    std::string metrics = metrics_csv_header();
    const RunSummary* best = nullptr;
    for (auto& [variant_dir, runs] : groups) {
        std::string name = fs::relative(variant_dir, run_dir).generic_string();
        if (name.empty() || name == ".") name = run_dir.filename().string();
        const AggregateReport agg = aggregate(name, runs, AggregateMode::mean_std);
        metrics += metrics_csv_row(agg);
        for (const auto& r : runs) {
            if (!best || r.mean_cs_unseen > best->mean_cs_unseen) best = &r;
        }
    }
    ReportFiles files{run_dir / "metrics.csv", run_dir / "cs_grid.csv"};
    const EvalReport unseen = eval_from_csv(read_text(best->dir / "eval_test_unseen.csv"), "test_unseen");
    write_text(files.metrics_csv, metrics);
    write_text(files.grid_csv, cs_grid_csv(unseen));
    return files;
}

}  // namespace pgmoe
