#include "pgmoe/models.hpp"

#include <stdexcept>

#include "pgmoe/container.hpp"

namespace pgmoe {

std::size_t WavefunctionModel::count_parameters() const {
    std::size_t total = 0;
    for (const auto& net : networks()) total += net.parameter_count();
    return total;
}

Wavefunction WavefunctionModel::predict_one(const FieldPoint& point) const {
    return predict(std::span<const FieldPoint>(&point, 1), false).psi_hat.front();
}

std::size_t count_parameters(const WavefunctionModel& model) { return model.count_parameters(); }

std::string to_string(Featurization f) { return f == Featurization::fields_only ? "fields_only" : "fields_padded"; }

Featurization featurization_from_string(const std::string& name) {
    if (name == "fields_only") return Featurization::fields_only;
    if (name == "fields_padded") return Featurization::fields_padded;
    throw std::invalid_argument("unknown featurization: " + name);
}

// ---------------------------------------------------------------- baseline

BaselineModel::BaselineModel(int n_spins, int hidden_layers, int hidden_width, Featurization featurization,
                             int input_width, std::uint64_t seed)
    : n_spins_(n_spins), featurization_(featurization) {
    check_spin_count(n_spins);
    if (featurization == Featurization::fields_only && input_width != 2) {
        throw std::invalid_argument("fields_only featurization has input width 2");
    }
    if (input_width < 2) throw std::invalid_argument("baseline input width must be >= 2");
    ArchitectureConfig arch{input_width, hidden_layers, hidden_width, 1 << n_spins};
    nets_.push_back(init_parameters(arch, seed));
}

BaselineModel::BaselineModel(int n_spins, Featurization featurization, Mlp net)
    : n_spins_(n_spins), featurization_(featurization) {
    if (net.arch.output_dim != (1 << n_spins)) {
        throw std::invalid_argument("baseline output width must be 2^n_spins");
    }
    nets_.push_back(std::move(net));
}

Eigen::VectorXd BaselineModel::features(const FieldPoint& point) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nets_.front().arch.input_dim);
    x[0] = point.b_x;
    x[1] = point.b_z;
    return x;
}

ModelPrediction BaselineModel::predict(std::span<const FieldPoint> points, bool keep_cache) const {
    const Mlp& net = nets_.front();
    Eigen::MatrixXd inputs(net.arch.input_dim, static_cast<Eigen::Index>(points.size()));
    for (std::size_t m = 0; m < points.size(); ++m) inputs.col(static_cast<Eigen::Index>(m)) = features(points[m]);
    ModelPrediction out;
    out.batch = points.size();
    ForwardCache cache;
    const Eigen::MatrixXd y = forward(net, inputs, keep_cache ? &cache : nullptr);
    for (Eigen::Index m = 0; m < y.cols(); ++m) out.psi_hat.emplace_back(y.col(m));
    if (keep_cache) out.caches.push_back(std::move(cache));
    return out;
}

std::vector<MlpGradients> BaselineModel::backward(const ModelPrediction& prediction,
                                                  std::span<const Wavefunction> psi_grad) const {
    if (prediction.caches.size() != 1 || psi_grad.size() != prediction.batch) {
        throw std::logic_error("baseline backward: prediction has no matching cache");
    }
    const Mlp& net = nets_.front();
    Eigen::MatrixXd g(net.arch.output_dim, static_cast<Eigen::Index>(psi_grad.size()));
    for (std::size_t m = 0; m < psi_grad.size(); ++m) g.col(static_cast<Eigen::Index>(m)) = psi_grad[m];
    std::vector<MlpGradients> grads;
    grads.push_back(pgmoe::backward(net, prediction.caches.front(), g));
    return grads;
}

ModelPrediction baseline_forward(const BaselineModel& model, double b_x, double b_z) {
    const FieldPoint p{b_x, b_z};
    return model.predict(std::span<const FieldPoint>(&p, 1), true);
}

// ---------------------------------------------------------------- mixture of experts

MoeModel::MoeModel(SzPartition partition, int hidden_layers, int hidden_width, std::uint64_t seed)
    : partition_(std::move(partition)) {
    const ArchitectureConfig arch{partition_.n_spins() + 2, hidden_layers, hidden_width, 1};
    for (int e = 0; e < partition_.expert_count(); ++e) {
        nets_.push_back(init_parameters(arch, seed + static_cast<std::uint64_t>(e)));
    }
    build_bit_blocks();
}

MoeModel::MoeModel(SzPartition partition, std::vector<Mlp> experts)
    : partition_(std::move(partition)), nets_(std::move(experts)) {
    if (static_cast<int>(nets_.size()) != partition_.expert_count()) {
        throw std::invalid_argument("MoeModel: expert count does not match the partition");
    }
    for (const auto& net : nets_) {
        if (net.arch.input_dim != partition_.n_spins() + 2 || net.arch.output_dim != 1) {
            throw std::invalid_argument("MoeModel: experts need input n_spins+2 and a single output");
        }
    }
    build_bit_blocks();
}

void MoeModel::build_bit_blocks() {
    const int n = partition_.n_spins();
    bit_blocks_.clear();
    for (int e = 0; e < partition_.expert_count(); ++e) {
        const auto configs = partition_.configs_of_expert(e);
        Eigen::MatrixXd bits(n, static_cast<Eigen::Index>(configs.size()));
        for (std::size_t k = 0; k < configs.size(); ++k) {
            for (int i = 0; i < n; ++i) {
                bits(i, static_cast<Eigen::Index>(k)) = (configs[k] >> i) & 1u ? 1.0 : 0.0;
            }
        }
        bit_blocks_.push_back(std::move(bits));
    }
}

Eigen::MatrixXd MoeModel::expert_inputs(int expert, const FieldPoint& point) const {
    const auto& bits = bit_blocks_.at(static_cast<std::size_t>(expert));
    Eigen::MatrixXd x(bits.rows() + 2, bits.cols());
    x.row(0).setConstant(point.b_x);
    x.row(1).setConstant(point.b_z);
    x.bottomRows(bits.rows()) = bits;
    return x;
}

ModelPrediction MoeModel::predict(std::span<const FieldPoint> points, bool keep_cache) const {
    const auto dim = static_cast<Eigen::Index>(partition_.dimension());
    const auto& perm = partition_.permutation();
    ModelPrediction out;
    out.batch = points.size();
    out.psi_hat.assign(points.size(), Wavefunction(dim));
    for (int e = 0; e < partition_.expert_count(); ++e) {
        const auto& bits = bit_blocks_[static_cast<std::size_t>(e)];
        const Eigen::Index count = bits.cols();
        const std::size_t offset = partition_.offsets()[static_cast<std::size_t>(e)];
        // Gating: every point's configurations for this expert, stacked column-wise.
        Eigen::MatrixXd x(bits.rows() + 2, count * static_cast<Eigen::Index>(points.size()));
        for (std::size_t m = 0; m < points.size(); ++m) {
            auto block = x.middleCols(static_cast<Eigen::Index>(m) * count, count);
            block.row(0).setConstant(points[m].b_x);
            block.row(1).setConstant(points[m].b_z);
            block.bottomRows(bits.rows()) = bits;
        }
        ForwardCache cache;
        const Eigen::MatrixXd y = forward(nets_[static_cast<std::size_t>(e)], x, keep_cache ? &cache : nullptr);
        // Reordering back to canonical positions.
        for (std::size_t m = 0; m < points.size(); ++m) {
            auto& psi = out.psi_hat[m];
            const Eigen::Index base = static_cast<Eigen::Index>(m) * count;
            for (Eigen::Index k = 0; k < count; ++k) {
                psi[perm[offset + static_cast<std::size_t>(k)]] = y(0, base + k);
            }
        }
        if (keep_cache) out.caches.push_back(std::move(cache));
    }
    return out;
}

std::vector<MlpGradients> MoeModel::backward(const ModelPrediction& prediction,
                                             std::span<const Wavefunction> psi_grad) const {
    if (prediction.caches.size() != nets_.size() || psi_grad.size() != prediction.batch) {
        throw std::logic_error("moe backward: prediction has no matching caches");
    }
    const auto& perm = partition_.permutation();
    std::vector<MlpGradients> grads;
    for (int e = 0; e < partition_.expert_count(); ++e) {
        const auto count = static_cast<Eigen::Index>(partition_.counts()[static_cast<std::size_t>(e)]);
        const std::size_t offset = partition_.offsets()[static_cast<std::size_t>(e)];
        Eigen::MatrixXd g(1, count * static_cast<Eigen::Index>(psi_grad.size()));
        for (std::size_t m = 0; m < psi_grad.size(); ++m) {
            if (psi_grad[m].size() != static_cast<Eigen::Index>(partition_.dimension())) {
                throw std::invalid_argument("moe backward: gradient length mismatch");
            }
            const Eigen::Index base = static_cast<Eigen::Index>(m) * count;
            for (Eigen::Index k = 0; k < count; ++k) {
                g(0, base + k) = psi_grad[m][perm[offset + static_cast<std::size_t>(k)]];
            }
        }
        grads.push_back(pgmoe::backward(nets_[static_cast<std::size_t>(e)],
                                        prediction.caches[static_cast<std::size_t>(e)], g));
    }
    return grads;
}

ModelPrediction moe_forward(const MoeModel& model, double b_x, double b_z) {
    const FieldPoint p{b_x, b_z};
    return model.predict(std::span<const FieldPoint>(&p, 1), true);
}

std::vector<MlpGradients> moe_backward(const MoeModel& model, const ModelPrediction& prediction,
                                       const Wavefunction& psi_grad) {
    return model.backward(prediction, std::span<const Wavefunction>(&psi_grad, 1));
}

// ---------------------------------------------------------------- checkpoints

namespace {

nlohmann::json arch_json(const ArchitectureConfig& a) {
    return {{"input_dim", a.input_dim}, {"hidden_layers", a.hidden_layers}, {"hidden_width", a.hidden_width},
            {"output_dim", a.output_dim}, {"activation", "tanh"}};
}

ArchitectureConfig arch_from(const nlohmann::json& j) {
    if (j.at("activation") != "tanh") throw std::runtime_error("unsupported activation in checkpoint");
    return {j.at("input_dim").get<int>(), j.at("hidden_layers").get<int>(), j.at("hidden_width").get<int>(),
            j.at("output_dim").get<int>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const WavefunctionModel& model, const CheckpointMeta& meta) {
    Container c;
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& net : model.networks()) {
        nets.push_back({{"arch", arch_json(net.arch)}, {"init_seed", net.init_seed}});
        c.arrays.push_back(flatten_parameters(net));
    }
    c.header = {{"format", "pgmoe-checkpoint"},
                {"version", 1},
                {"kind", model.kind()},
                {"n_spins", model.n_spins()},
                {"networks", nets},
                {"seeds", {{"init", meta.init_seed}, {"split", meta.split_seed}, {"data_order", meta.data_seed}}},
                {"extra", meta.extra}};
    if (const auto* moe = dynamic_cast<const MoeModel*>(&model)) {
        c.header["partition"] = nlohmann::json::parse(partition_to_json(moe->partition()));
    } else if (const auto* base = dynamic_cast<const BaselineModel*>(&model)) {
        c.header["featurization"] = to_string(base->featurization());
    }
    write_container(path, c);
}

std::unique_ptr<WavefunctionModel> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
    const Container c = read_container(path);
    const auto& h = c.header;
    if (h.value("format", "") != "pgmoe-checkpoint" || h.value("version", 0) != 1) {
        throw std::runtime_error(path.string() + " is not a version-1 pgmoe checkpoint");
    }
    const auto& nets_json = h.at("networks");
    if (nets_json.size() != c.arrays.size()) throw std::runtime_error("checkpoint network count mismatch");
    std::vector<Mlp> nets;
    for (std::size_t i = 0; i < nets_json.size(); ++i) {
        Mlp net = init_parameters(arch_from(nets_json[i].at("arch")), nets_json[i].at("init_seed").get<std::uint64_t>());
        assign_parameters(net, c.arrays[i]);
        net.version = 0;
        nets.push_back(std::move(net));
    }
    if (meta) {
        meta->init_seed = h.at("seeds").at("init").get<std::uint64_t>();
        meta->split_seed = h.at("seeds").at("split").get<std::uint64_t>();
        meta->data_seed = h.at("seeds").at("data_order").get<std::uint64_t>();
        meta->extra = h.value("extra", nlohmann::json::object());
    }
    const int n_spins = h.at("n_spins").get<int>();
    const std::string kind = h.at("kind").get<std::string>();
    if (kind == "pgmoe") {
        const auto intervals = intervals_from_json(h.at("partition").dump());
        return std::make_unique<MoeModel>(build_partition(n_spins, intervals), std::move(nets));
    }
    if (kind == "baseline") {
        if (nets.size() != 1) throw std::runtime_error("baseline checkpoint must hold one network");
        return std::make_unique<BaselineModel>(n_spins, featurization_from_string(h.at("featurization")),
                                               std::move(nets.front()));
    }
    throw std::runtime_error("unknown model kind in checkpoint: " + kind);
}

}  // namespace pgmoe
