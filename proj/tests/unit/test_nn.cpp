#include <doctest.h>

#include <filesystem>
#include <random>

#include "pgmoe/nn.hpp"
#include "../support.hpp"

using namespace pgmoe;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) m.col(j) = oracle::random_vector(rng, r);
    return m;
}

// loss = sum(G .* f(X)), so d loss / d output = G
double probe(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& g) {
    return (forward(net, x).array() * g.array()).sum();
}

std::size_t hand_count(const ArchitectureConfig& a) {
    std::size_t total = 0;
    int fan_in = a.input_dim;
    for (int l = 0; l < a.hidden_layers; ++l) {
        total += static_cast<std::size_t>(fan_in) * a.hidden_width + a.hidden_width;
        fan_in = a.hidden_width;
    }
    return total + static_cast<std::size_t>(fan_in) * a.output_dim + a.output_dim;
}

}  // namespace

TEST_CASE("parameter counts") {
    CHECK(parameter_count({2, 2, 200, 1}) == 41001);  // 600 + 40200 + 201
    CHECK(parameter_count({12, 2, 200, 1}) == 43001);
    CHECK(parameter_count({20, 2, 2000, 1024}) == 6093024);
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dim(1, 64), depth(1, 5);
    for (int t = 0; t < 20; ++t) {
        const ArchitectureConfig a{dim(rng), depth(rng), dim(rng), dim(rng)};
        CHECK(parameter_count(a) == hand_count(a));
        CHECK(init_parameters(a, t).parameter_count() == hand_count(a));
    }
    CHECK_THROWS_AS(parameter_count({0, 2, 3, 1}), std::invalid_argument);
}

TEST_CASE("initialization") {
    const ArchitectureConfig a{5, 2, 16, 3};
    const auto n1 = init_parameters(a, 9);
    const auto n2 = init_parameters(a, 9);
    CHECK(flatten_parameters(n1) == flatten_parameters(n2));
    CHECK(flatten_parameters(init_parameters(a, 10)) != flatten_parameters(n1));
    for (const auto& layer : n1.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        CHECK(layer.weight.cwiseAbs().maxCoeff() <= bound);
        CHECK(layer.bias.isZero(0.0));
    }
}

TEST_CASE("forward basics") {
    std::mt19937_64 rng(1);
    auto net = init_parameters({3, 2, 4, 2}, 1);
    for (auto& l : net.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    CHECK(forward(net, random_matrix(rng, 3, 5)).isZero(0.0));

    // tiny weights: the net is linear to first order
    auto small = init_parameters({3, 1, 4, 2}, 2);
    const Eigen::VectorXd x = 1e-4 * oracle::random_vector(rng, 3);
    const Eigen::MatrixXd lin = small.layers[1].weight * (small.layers[0].weight * x);
    CHECK((forward(small, x) - lin).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(forward(small, Eigen::MatrixXd::Zero(4, 1)), std::invalid_argument);

    Eigen::MatrixXd big(1, 4);
    big << -800.0, -1e-3, 1e-3, 800.0;
    tanh_inplace(big);
    CHECK(big(0, 0) == -1.0);
    CHECK(big(0, 3) == 1.0);
    CHECK(big(0, 1) == doctest::Approx(std::tanh(-1e-3)).epsilon(1e-12));
}

TEST_CASE("backward matches finite differences") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> dim(1, 8), depth(1, 3);
    for (int t = 0; t < 10; ++t) {
        auto net = init_parameters({dim(rng), depth(rng), dim(rng), dim(rng)}, 100 + t);
        for (auto& l : net.layers) l.bias = 0.3 * oracle::random_vector(rng, l.bias.size());
        Eigen::MatrixXd x = random_matrix(rng, net.arch.input_dim, 3);
        const Eigen::MatrixXd g = random_matrix(rng, net.arch.output_dim, 3);
        ForwardCache cache;
        forward(net, x, &cache);
        const auto grads = backward(net, cache, g, true);
        double worst = 0.0;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto& w = net.layers[l].weight;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                const double fd = oracle::central_diff([&] { return probe(net, x, g); }, w.data()[i]);
                worst = std::max(worst, oracle::rel_err(grads.layers[l].weight.data()[i], fd));
            }
            auto& b = net.layers[l].bias;
            for (Eigen::Index i = 0; i < b.size(); ++i) {
                const double fd = oracle::central_diff([&] { return probe(net, x, g); }, b[i]);
                worst = std::max(worst, oracle::rel_err(grads.layers[l].bias[i], fd));
            }
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double fd = oracle::central_diff([&] { return probe(net, x, g); }, x.data()[i]);
            worst = std::max(worst, oracle::rel_err(grads.input.data()[i], fd));
        }
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("backward linearity and guards") {
    std::mt19937_64 rng(6);
    auto net = init_parameters({4, 2, 6, 3}, 4);
    const Eigen::MatrixXd x = random_matrix(rng, 4, 5);
    ForwardCache cache;
    forward(net, x, &cache);
    const Eigen::MatrixXd g1 = random_matrix(rng, 3, 5), g2 = random_matrix(rng, 3, 5);
    auto sum = backward(net, cache, g1);
    sum.add(backward(net, cache, g2));
    const auto joint = backward(net, cache, g1 + g2);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK((sum.layers[l].weight - joint.layers[l].weight).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((sum.layers[l].bias - joint.layers[l].bias).cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto zero = backward(net, cache, Eigen::MatrixXd::Zero(3, 5));
    for (const auto& l : zero.layers) CHECK(l.weight.isZero(0.0));

    CHECK_THROWS_AS(backward(net, cache, Eigen::MatrixXd::Zero(3, 4)), std::invalid_argument);
    SgdMomentum opt(0.1, 0.0);
    std::vector<Mlp> nets{net};
    ForwardCache c2;
    forward(nets[0], x, &c2);
    const std::vector<MlpGradients> gs{backward(nets[0], c2, g1)};
    opt.step(nets, gs);
    CHECK_THROWS_AS(backward(nets[0], c2, g1), std::logic_error);
}

TEST_CASE("SGD with momentum") {
    auto make = [] {
        Mlp net = init_parameters({1, 1, 1, 1}, 0);
        for (auto& l : net.layers) {
            l.weight.setZero();
            l.bias.setZero();
        }
        return std::vector<Mlp>{net};
    };
    auto grad_of = [](const Mlp& net, double v) {
        auto g = zero_gradients(net);
        g.layers[0].weight(0, 0) = v;
        return std::vector<MlpGradients>{g};
    };
    {
        auto nets = make();
        SgdMomentum opt(0.5, 0.0);
        opt.step(nets, grad_of(nets[0], 2.0));
        CHECK(nets[0].layers[0].weight(0, 0) == -1.0);
    }
    {
        auto nets = make();
        SgdMomentum opt(1.0, 0.9);
        opt.step(nets, grad_of(nets[0], 1.0));
        opt.step(nets, grad_of(nets[0], 1.0));
        CHECK(nets[0].layers[0].weight(0, 0) == doctest::Approx(-2.9).epsilon(1e-15));
        // zero gradient: velocity still moves the weight by -lr*mom*v
        const double before = nets[0].layers[0].weight(0, 0);
        opt.step(nets, grad_of(nets[0], 0.0));
        CHECK(nets[0].layers[0].weight(0, 0) - before == doctest::Approx(-0.9 * 1.9).epsilon(1e-15));
    }
    CHECK_THROWS_AS(SgdMomentum(0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(SgdMomentum(0.1, 1.0), std::invalid_argument);
}

TEST_CASE("plateau decay trace") {
    SgdMomentum opt(1.0, 0.0);
    PlateauDecay decay(0.987, 8);
    for (double loss = 10.0; loss > 0.0; loss -= 0.5) CHECK_FALSE(decay.observe(loss, opt));
    CHECK(opt.learning_rate() == 1.0);

    SgdMomentum flat(1.0, 0.0);
    PlateauDecay d2(0.987, 8);
    std::vector<int> fired;
    for (int epoch = 1; epoch <= 17; ++epoch) {
        if (d2.observe(1.0, flat)) fired.push_back(epoch);
    }
    // epoch 1 sets the best; epochs 2..9 are the first 8 flat ones
    CHECK(fired == std::vector<int>{9, 17});
    CHECK(flat.learning_rate() == doctest::Approx(0.987 * 0.987).epsilon(1e-15));

    // improvements smaller than the margin do not count
    SgdMomentum o3(1.0, 0.0);
    PlateauDecay d3(0.5, 2);
    d3.observe(1.0, o3);
    d3.observe(1.0 - 1e-14, o3);
    CHECK(d3.observe(1.0 - 2e-14, o3));

    SgdMomentum o4(1.0, 0.0);
    PlateauDecay off(0.0, 1);
    off.observe(1.0, o4);
    CHECK_FALSE(off.observe(1.0, o4));
    CHECK(o4.learning_rate() == 1.0);
}

TEST_CASE("early stopping trace") {
    EarlyStopping up(30);
    for (int e = 0; e < 500; ++e) CHECK_FALSE(up.observe(0.001 * e));

    EarlyStopping flat(30);
    int stop = 0;
    for (int epoch = 1; epoch <= 100 && !stop; ++epoch) {
        if (flat.observe(0.5)) stop = epoch;
    }
    CHECK(stop == 1 + 30);

    EarlyStopping reset(30);
    reset.observe(0.5);
    for (int i = 0; i < 28; ++i) CHECK_FALSE(reset.observe(0.4));
    CHECK_FALSE(reset.observe(0.6));  // improvement on the 29th epoch of the window
    CHECK(reset.improved_last());
    CHECK(reset.since_improvement() == 0);
    for (int i = 0; i < 29; ++i) CHECK_FALSE(reset.observe(0.6));
    CHECK(reset.observe(0.6));

    EarlyStopping restarted(3);
    restarted.observe(0.5);
    for (int i = 0; i < 5; ++i) restarted.observe(0.4);
    restarted.restart_patience();
    CHECK(restarted.best() == 0.5);
    CHECK_FALSE(restarted.observe(0.4));
    CHECK_FALSE(restarted.observe(0.4));
    CHECK(restarted.observe(0.4));
}

TEST_CASE("parameter file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "pgmoe_nn_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(3);
    auto net = init_parameters({7, 3, 9, 2}, 5);
    for (auto& l : net.layers) l.bias = oracle::random_vector(rng, l.bias.size());
    save_parameters(dir / "net.bin", net);
    const auto back = load_parameters(dir / "net.bin");
    CHECK(back.arch == net.arch);
    CHECK(back.init_seed == 5);
    CHECK(flatten_parameters(back) == flatten_parameters(net));
    std::filesystem::remove_all(dir);
}
