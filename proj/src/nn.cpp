#include "pgmoe/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include "pgmoe/container.hpp"

namespace pgmoe {

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

void validate(const ArchitectureConfig& arch) {
    if (arch.input_dim < 1 || arch.hidden_layers < 1 || arch.hidden_width < 1 || arch.output_dim < 1) {
        throw std::invalid_argument("architecture dimensions must all be >= 1");
    }
}

std::size_t parameter_count(const ArchitectureConfig& arch) {
    validate(arch);
    std::size_t total = 0;
    std::size_t fan_in = static_cast<std::size_t>(arch.input_dim);
    for (int l = 0; l <= arch.hidden_layers; ++l) {
        const auto fan_out =
            static_cast<std::size_t>(l == arch.hidden_layers ? arch.output_dim : arch.hidden_width);
        total += fan_in * fan_out + fan_out;
        fan_in = fan_out;
    }
    return total;
}

std::size_t Mlp::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers) {
        total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return total;
}

Mlp init_parameters(const ArchitectureConfig& arch, std::uint64_t seed) {
    validate(arch);
    Mlp net;
    net.arch = arch;
    net.init_seed = seed;
    std::mt19937_64 rng(seed);
    int fan_in = arch.input_dim;
    for (int l = 0; l <= arch.hidden_layers; ++l) {
        const int fan_out = l == arch.hidden_layers ? arch.output_dim : arch.hidden_width;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        DenseLayer layer;
        layer.weight.resize(fan_out, fan_in);
        for (Eigen::Index c = 0; c < fan_in; ++c)
            for (Eigen::Index r = 0; r < fan_out; ++r) layer.weight(r, c) = uniform(rng);
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        net.layers.push_back(std::move(layer));
        fan_in = fan_out;
    }
    return net;
}

void tanh_inplace(Eigen::MatrixXd& values) {
    // 1 - 2/(e^{2x}+1) saturates cleanly: exp overflow gives +1, underflow -1.
    auto a = values.array();
    a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& inputs, ForwardCache* cache) {
    if (inputs.rows() != net.arch.input_dim) {
        throw std::invalid_argument("forward: input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                                    std::to_string(net.arch.input_dim));
    }
    if (cache) {
        cache->activations.clear();
        cache->activations.reserve(net.layers.size());
        cache->activations.push_back(inputs);
        cache->owner = &net;
        cache->version = net.version;
    }
    Eigen::MatrixXd current;
    const Eigen::MatrixXd* in = &inputs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        Eigen::MatrixXd z(layer.weight.rows(), in->cols());
        z.noalias() = layer.weight * (*in);
        z.colwise() += layer.bias;
        if (l + 1 == net.layers.size()) {
            return z;
        }
        tanh_inplace(z);
        if (cache) {
            cache->activations.push_back(std::move(z));
            in = &cache->activations.back();
        } else {
            current = std::move(z);
            in = &current;
        }
    }
    return current;  // unreachable: there is always an output layer
}

void MlpGradients::add(const MlpGradients& other) {
    if (layers.size() != other.layers.size()) {
        throw std::invalid_argument("MlpGradients::add: layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight += other.layers[l].weight;
        layers[l].bias += other.layers[l].bias;
    }
}

MlpGradients zero_gradients(const Mlp& net) {
    MlpGradients g;
    for (const auto& layer : net.layers) {
        g.layers.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                            Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return g;
}

MlpGradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
                      bool want_input_grad) {
    if (cache.owner != &net || cache.version != net.version || cache.activations.size() != net.layers.size()) {
        throw std::logic_error("backward: forward cache does not belong to the current parameters");
    }
    const Eigen::Index batch = cache.activations.front().cols();
    if (output_grad.rows() != net.arch.output_dim || output_grad.cols() != batch) {
        throw std::invalid_argument("backward: output gradient shape does not match the cached batch");
    }
    MlpGradients grads;
    grads.layers.resize(net.layers.size());
    Eigen::MatrixXd delta = output_grad;  // d loss / d pre-activation of current layer
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const Eigen::MatrixXd& in = cache.activations[l];
        auto& g = grads.layers[l];
        g.weight.noalias() = delta * in.transpose();
        g.bias = delta.rowwise().sum();
        if (l == 0 && !want_input_grad) break;
        Eigen::MatrixXd upstream(in.rows(), batch);
        upstream.noalias() = net.layers[l].weight.transpose() * delta;
        if (l == 0) {
            grads.input = std::move(upstream);
            break;
        }
        // tanh'(z) = 1 - tanh(z)^2, with tanh(z) the cached activation
        delta = upstream.array() * (1.0 - in.array().square());
    }
    return grads;
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum) : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

void SgdMomentum::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    learning_rate_ = lr;
}

void SgdMomentum::step(std::span<Mlp> nets, std::span<const MlpGradients> grads) {
    if (nets.size() != grads.size()) {
        throw std::invalid_argument("SgdMomentum::step: network and gradient counts differ");
    }
    if (velocity_.empty()) {
        for (const auto& net : nets) velocity_.push_back(zero_gradients(net).layers);
    }
    if (velocity_.size() != nets.size()) {
        throw std::invalid_argument("SgdMomentum::step: network count changed between steps");
    }
    for (std::size_t n = 0; n < nets.size(); ++n) {
        auto& net = nets[n];
        if (grads[n].layers.size() != net.layers.size()) {
            throw std::invalid_argument("SgdMomentum::step: gradient layer count mismatch");
        }
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto& v = velocity_[n][l];
            const auto& g = grads[n].layers[l];
            v.weight = momentum_ * v.weight + g.weight;
            v.bias = momentum_ * v.bias + g.bias;
            net.layers[l].weight -= learning_rate_ * v.weight;
            net.layers[l].bias -= learning_rate_ * v.bias;
        }
        ++net.version;
    }
}

PlateauDecay::PlateauDecay(double factor, int patience) : factor_(factor), patience_(patience) {
    if (!(factor >= 0.0 && factor <= 1.0)) throw std::invalid_argument("decay factor must lie in [0, 1]");
    if (patience < 1) throw std::invalid_argument("plateau patience must be >= 1");
}

bool PlateauDecay::observe(double loss, SgdMomentum& optimizer) {
    if (loss < best_ - kImprovementEpsilon) {
        best_ = loss;
        counter_ = 0;
        return false;
    }
    if (++counter_ < patience_) return false;
    counter_ = 0;
    if (factor_ == 0.0) return false;
    optimizer.set_learning_rate(optimizer.learning_rate() * factor_);
    return true;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("early-stop patience must be >= 1");
}

bool EarlyStopping::observe(double metric) {
    improved_last_ = metric > best_ + kImprovementEpsilon;
    if (improved_last_) {
        best_ = metric;
        since_ = 0;
        return false;
    }
    return ++since_ >= patience_;
}

std::vector<double> flatten_parameters(const Mlp& net) {
    std::vector<double> flat;
    flat.reserve(net.parameter_count());
    for (const auto& layer : net.layers) {
        flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
        flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    return flat;
}

void assign_parameters(Mlp& net, std::span<const double> flat) {
    if (flat.size() != net.parameter_count()) {
        throw std::invalid_argument("assign_parameters: expected " + std::to_string(net.parameter_count()) +
                                    " values, got " + std::to_string(flat.size()));
    }
    std::size_t pos = 0;
    for (auto& layer : net.layers) {
        std::memcpy(layer.weight.data(), flat.data() + pos, sizeof(double) * static_cast<std::size_t>(layer.weight.size()));
        pos += static_cast<std::size_t>(layer.weight.size());
        std::memcpy(layer.bias.data(), flat.data() + pos, sizeof(double) * static_cast<std::size_t>(layer.bias.size()));
        pos += static_cast<std::size_t>(layer.bias.size());
    }
    ++net.version;
}

namespace {

nlohmann::json arch_to_json(const ArchitectureConfig& a) {
    return {{"input_dim", a.input_dim}, {"hidden_layers", a.hidden_layers}, {"hidden_width", a.hidden_width},
            {"output_dim", a.output_dim}, {"activation", "tanh"}};
}

ArchitectureConfig arch_from_json(const nlohmann::json& j) {
    ArchitectureConfig a;
    a.input_dim = j.at("input_dim").get<int>();
    a.hidden_layers = j.at("hidden_layers").get<int>();
    a.hidden_width = j.at("hidden_width").get<int>();
    a.output_dim = j.at("output_dim").get<int>();
    if (j.at("activation").get<std::string>() != "tanh") throw std::runtime_error("unsupported activation");
    return a;
}

}  // namespace

void save_parameters(const std::filesystem::path& path, const Mlp& net) {
    Container c;
    c.header = {{"format", "pgmoe-mlp"}, {"version", 1}, {"arch", arch_to_json(net.arch)}, {"init_seed", net.init_seed}};
    c.arrays.push_back(flatten_parameters(net));
    write_container(path, c);
}

Mlp load_parameters(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.header.at("format") != "pgmoe-mlp" || c.header.at("version") != 1 || c.arrays.size() != 1) {
        throw std::runtime_error("not a pgmoe MLP parameter file: " + path.string());
    }
    Mlp net = init_parameters(arch_from_json(c.header.at("arch")), c.header.at("init_seed").get<std::uint64_t>());
    assign_parameters(net, c.arrays.front());
    net.version = 0;
    return net;
}

void write_container(const std::filesystem::path& path, const Container& container) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string header = container.header.dump();
    const auto write_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    out.write(kContainerMagic.data(), static_cast<std::streamsize>(kContainerMagic.size()));
    write_u64(header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_u64(container.arrays.size());
    for (const auto& arr : container.arrays) {
        write_u64(arr.size());
        out.write(reinterpret_cast<const char*>(arr.data()), static_cast<std::streamsize>(arr.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string magic(kContainerMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kContainerMagic) throw std::runtime_error(path.string() + " is not a pgmoe container");
    const auto read_u64 = [&] {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw std::runtime_error("truncated container " + path.string());
        return v;
    };
    Container c;
    std::string header(read_u64(), '\0');
    in.read(header.data(), static_cast<std::streamsize>(header.size()));
    c.header = nlohmann::json::parse(header);
    const auto count = read_u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::vector<double> arr(read_u64());
        in.read(reinterpret_cast<char*>(arr.data()), static_cast<std::streamsize>(arr.size() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated container " + path.string());
        c.arrays.push_back(std::move(arr));
    }
    return c;
}

}  // namespace pgmoe
