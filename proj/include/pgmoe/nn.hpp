#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace pgmoe {

enum class Activation { tanh };

// Fully connected net: `hidden_layers` tanh layers of `hidden_width` units,
// then a linear output layer.
struct ArchitectureConfig {
    int input_dim = 1;
    int hidden_layers = 2;
    int hidden_width = 200;
    int output_dim = 1;
    Activation activation = Activation::tanh;

    friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

void validate(const ArchitectureConfig& arch);

// Closed form: sum over layers of fan_in * fan_out + fan_out.
std::size_t parameter_count(const ArchitectureConfig& arch);

struct DenseLayer {
    Eigen::MatrixXd weight;  // fan_out x fan_in
    Eigen::VectorXd bias;
};

struct Mlp {
    ArchitectureConfig arch;
    std::vector<DenseLayer> layers;
    std::uint64_t init_seed = 0;
    // Bumped on every parameter update so stale forward caches are detectable.
    std::uint64_t version = 0;

    std::size_t parameter_count() const;
};

// Weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
Mlp init_parameters(const ArchitectureConfig& arch, std::uint64_t seed);

struct ForwardCache {
    // activations[0] is the input batch, activations[l] the output of hidden layer l.
    std::vector<Eigen::MatrixXd> activations;
    const Mlp* owner = nullptr;
    std::uint64_t version = 0;
};

// Inputs are column-major samples: input_dim x batch. Returns output_dim x batch.
Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& inputs, ForwardCache* cache = nullptr);

struct MlpGradients {
    std::vector<DenseLayer> layers;
    Eigen::MatrixXd input;  // d loss / d inputs, filled only when requested

    void add(const MlpGradients& other);
};

MlpGradients zero_gradients(const Mlp& net);

// Exact gradients of the batch loss given d loss / d outputs.
MlpGradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
                      bool want_input_grad = false);

// tanh evaluated through the vectorized exponential.
void tanh_inplace(Eigen::MatrixXd& values);

// Classical momentum: v <- mom * v + g; theta <- theta - lr * v.
class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum);

    double learning_rate() const { return learning_rate_; }
    void set_learning_rate(double lr);
    double momentum() const { return momentum_; }

    void step(std::span<Mlp> nets, std::span<const MlpGradients> grads);

private:
    double learning_rate_;
    double momentum_;
    std::vector<std::vector<DenseLayer>> velocity_;
};

// Comparisons count as improvements only past this absolute margin.
inline constexpr double kImprovementEpsilon = 1e-12;

// Multiplies the learning rate by `factor` after `patience` consecutive
// non-improving (minimized) observations. A factor of 0 disables decay.
class PlateauDecay {
public:
    PlateauDecay(double factor, int patience);

    // Returns true when the learning rate was decayed on this observation.
    bool observe(double loss, SgdMomentum& optimizer);

    int counter() const { return counter_; }
    double best() const { return best_; }

private:
    double factor_;
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int counter_ = 0;
};

// Maximize-mode early stopping.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience);

    // Returns true when training should stop.
    bool observe(double metric);
    // Zeroes the patience counter; the best value is kept.
    void restart_patience() { since_ = 0; }

    bool improved_last() const { return improved_last_; }
    double best() const { return best_; }
    int since_improvement() const { return since_; }

private:
    int patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    int since_ = 0;
    bool improved_last_ = false;
};

std::vector<double> flatten_parameters(const Mlp& net);
void assign_parameters(Mlp& net, std::span<const double> flat);

void save_parameters(const std::filesystem::path& path, const Mlp& net);
Mlp load_parameters(const std::filesystem::path& path);

}  // namespace pgmoe
