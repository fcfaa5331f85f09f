#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pgmoe/eigensolver.hpp"
#include "pgmoe/nn.hpp"
#include "pgmoe/spin_basis.hpp"

namespace pgmoe {

struct FieldPoint {
    double b_x = 0.0;
    double b_z = 0.0;
    friend bool operator==(const FieldPoint&, const FieldPoint&) = default;
};

struct ModelPrediction {
    std::vector<Wavefunction> psi_hat;  // canonical order, one per input point
    std::vector<ForwardCache> caches;   // one per network, empty when not requested
    std::size_t batch = 0;
};

class WavefunctionModel {
public:
    virtual ~WavefunctionModel() = default;

    virtual std::string kind() const = 0;
    virtual int n_spins() const = 0;
    virtual ModelPrediction predict(std::span<const FieldPoint> points, bool keep_cache) const = 0;
    // Gradients with respect to every network's parameters, given d loss / d psi_hat.
    virtual std::vector<MlpGradients> backward(const ModelPrediction& prediction,
                                               std::span<const Wavefunction> psi_grad) const = 0;
    virtual std::vector<Mlp>& networks() = 0;
    virtual const std::vector<Mlp>& networks() const = 0;
    virtual std::unique_ptr<WavefunctionModel> clone() const = 0;

    std::size_t count_parameters() const;
    Wavefunction predict_one(const FieldPoint& point) const;
};

enum class Featurization { fields_only, fields_padded };

std::string to_string(Featurization f);
Featurization featurization_from_string(const std::string& name);

// One network emitting all 2^N coefficients from the field values.
class BaselineModel final : public WavefunctionModel {
public:
    // `input_width` is 2 for fields_only; fields_padded appends zeros up to it.
    BaselineModel(int n_spins, int hidden_layers, int hidden_width, Featurization featurization, int input_width,
                  std::uint64_t seed);
    BaselineModel(int n_spins, Featurization featurization, Mlp net);

    std::string kind() const override { return "baseline"; }
    int n_spins() const override { return n_spins_; }
    Featurization featurization() const { return featurization_; }
    Eigen::VectorXd features(const FieldPoint& point) const;

    ModelPrediction predict(std::span<const FieldPoint> points, bool keep_cache) const override;
    std::vector<MlpGradients> backward(const ModelPrediction& prediction,
                                       std::span<const Wavefunction> psi_grad) const override;
    std::vector<Mlp>& networks() override { return nets_; }
    const std::vector<Mlp>& networks() const override { return nets_; }
    std::unique_ptr<WavefunctionModel> clone() const override { return std::make_unique<BaselineModel>(*this); }

private:
    int n_spins_;
    Featurization featurization_;
    std::vector<Mlp> nets_;
};

// Experts each predict one coefficient from (B_x, B_z, spin bits as 1/0).
// Gating routes configurations by S_z; the reordering restores canonical order.
class MoeModel final : public WavefunctionModel {
public:
    // Expert e is initialized with seed + e.
    MoeModel(SzPartition partition, int hidden_layers, int hidden_width, std::uint64_t seed);
    MoeModel(SzPartition partition, std::vector<Mlp> experts);

    std::string kind() const override { return "pgmoe"; }
    int n_spins() const override { return partition_.n_spins(); }
    const SzPartition& partition() const { return partition_; }
    std::size_t expert_count() const { return nets_.size(); }

    // (n_spins + 2) x count matrix of expert inputs for one field point.
    Eigen::MatrixXd expert_inputs(int expert, const FieldPoint& point) const;

    ModelPrediction predict(std::span<const FieldPoint> points, bool keep_cache) const override;
    std::vector<MlpGradients> backward(const ModelPrediction& prediction,
                                       std::span<const Wavefunction> psi_grad) const override;
    std::vector<Mlp>& networks() override { return nets_; }
    const std::vector<Mlp>& networks() const override { return nets_; }
    std::unique_ptr<WavefunctionModel> clone() const override { return std::make_unique<MoeModel>(*this); }

private:
    void build_bit_blocks();

    SzPartition partition_;
    std::vector<Mlp> nets_;
    std::vector<Eigen::MatrixXd> bit_blocks_;  // n_spins x count per expert
};

ModelPrediction moe_forward(const MoeModel& model, double b_x, double b_z);
std::vector<MlpGradients> moe_backward(const MoeModel& model, const ModelPrediction& prediction,
                                       const Wavefunction& psi_grad);
ModelPrediction baseline_forward(const BaselineModel& model, double b_x, double b_z);
std::size_t count_parameters(const WavefunctionModel& model);

struct CheckpointMeta {
    std::uint64_t init_seed = 0;
    std::uint64_t split_seed = 0;
    std::uint64_t data_seed = 0;
    nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const WavefunctionModel& model, const CheckpointMeta& meta);
std::unique_ptr<WavefunctionModel> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace pgmoe
