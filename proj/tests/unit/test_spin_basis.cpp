#include <doctest.h>

#include <bit>
#include <random>
#include <set>

#include "pgmoe/errors.hpp"
#include "pgmoe/spin_basis.hpp"
#include "../support.hpp"

using namespace pgmoe;

namespace {
std::uint32_t from_arrows(const char* s) {
    // s[0] is spin 1.
    std::uint32_t idx = 0;
    for (int i = 0; s[i]; ++i) if (s[i] == 'u') idx |= 1u << i;
    return idx;
}
}  // namespace

TEST_CASE("enumerate_configs sizes and order") {
    auto one = enumerate_configs(1);
    REQUIRE(one.size() == 2);
    CHECK(one[0].index == 0);
    CHECK_FALSE(one[0].spin_up(0));
    CHECK(one[1].spin(0) == 1);
    CHECK(enumerate_configs(4).size() == 16);
    auto ten = enumerate_configs(10);
    CHECK(ten.size() == 1024);
    for (std::size_t i = 0; i < ten.size(); ++i) CHECK(ten[i].index == i);
    CHECK_THROWS_AS(enumerate_configs(0), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_configs(kMaxSpins + 1), std::invalid_argument);
}

TEST_CASE("magnetization") {
    CHECK(magnetization(from_arrows("uuuu"), 4).sz() == 2.0);
    CHECK(magnetization(from_arrows("uudd"), 4).sz() == 0.0);
    for (int n = 1; n <= 12; ++n) CHECK(magnetization(0, n).twice_sz == -n);
    CHECK(magnetization(0b101, 3).twice_sz == 1);
}

TEST_CASE("binomial shell sizes") {
    for (int n = 1; n <= 12; ++n) {
        std::vector<int> shell(n + 1, 0);
        for (std::uint32_t c = 0; c < (1u << n); ++c) ++shell[(magnetization(c, n).twice_sz + n) / 2];
        for (int k = 0; k <= n; ++k) CHECK(shell[k] == oracle::binomial(n, k));
    }
}

TEST_CASE("build_partition counts") {
    auto p10 = build_partition(10, {{0, -5, 0}, {1, 1, 3}, {2, 4, 5}});
    CHECK(p10.counts() == std::vector<std::size_t>{638, 375, 11});
    CHECK(build_partition(10, {{0, -5, 5}}).counts() == std::vector<std::size_t>{1024});
    auto p4 = build_partition(4, {{0, -2, -1}, {1, 0, 0}, {2, 1, 2}});
    CHECK(p4.counts() == std::vector<std::size_t>{5, 6, 5});

    // counts are sums of binomials of the owned shells
    for (int e = 0; e < 3; ++e) {
        double expect = 0.0;
        for (int tsz : p10.groups()[e]) expect += oracle::binomial(10, (tsz + 10) / 2);
        CHECK(p10.counts()[e] == expect);
    }
}

TEST_CASE("build_partition validation names the interval") {
    auto message = [](auto&& fn) {
        try {
            fn();
        } catch (const PartitionError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const auto gap = message([] { build_partition(10, {{0, -5, 0}, {1, 2, 5}}); });
    CHECK(gap.find("S_z = 1 ") != std::string::npos);
    const auto overlap = message([] { build_partition(10, {{0, -5, 1}, {1, 1, 5}}); });
    CHECK(overlap.find("[1, 5]") != std::string::npos);
    CHECK_THROWS_AS(build_partition(10, {{0, -5, 0.5}, {1, 1, 5}}), PartitionError);  // off lattice
    CHECK_THROWS_AS(build_partition(10, {{0, -5, 6}}), PartitionError);
    CHECK_THROWS_AS(build_partition(10, std::span<const SzInterval>{}), PartitionError);
    CHECK_THROWS_AS(build_partition(10, {{0, -5, 0}, {2, 1, 5}}), PartitionError);  // expert 1 missing
    // odd chains live on half-integer S_z
    auto odd = build_partition(3, {{0, -1.5, -0.5}, {1, 0.5, 1.5}});
    CHECK(odd.counts() == std::vector<std::size_t>{4, 4});
}

TEST_CASE("partition exhaustive, disjoint, and keyed only by S_z") {
    std::vector<SzPartition> parts = {build_partition(10, {{0, -5, 0}, {1, 1, 3}, {2, 4, 5}}),
                                      build_random_partition(10, 3, 7), build_random_partition(8, 4, 1),
                                      single_expert_partition(6)};
    for (const auto& p : parts) {
        const auto n = p.n_spins();
        std::vector<int> seen(p.dimension(), 0);
        for (int e = 0; e < p.expert_count(); ++e) {
            for (auto c : p.configs_of_expert(e)) {
                ++seen[c];
                CHECK(p.expert_of_config(c) == e);
            }
        }
        for (int s : seen) CHECK(s == 1);
        for (std::uint32_t c = 0; c < p.dimension(); ++c) {
            CHECK(p.expert_of_config(c) == p.expert_of_twice_sz(magnetization(c, n).twice_sz));
        }
        std::set<std::uint32_t> perm(p.permutation().begin(), p.permutation().end());
        CHECK(perm.size() == p.dimension());
        CHECK(*perm.rbegin() == p.dimension() - 1);
    }
}

TEST_CASE("build_random_partition") {
    auto a = build_random_partition(10, 3, 42);
    auto b = build_random_partition(10, 3, 42);
    CHECK(a.permutation() == b.permutation());
    CHECK(a.groups() == b.groups());
    CHECK(a.expert_count() == 3);
    for (const auto& g : a.groups()) CHECK_FALSE(g.empty());
    CHECK(build_random_partition(10, 1, 5).counts() == std::vector<std::size_t>{1024});
    auto forced = build_random_partition(4, 5, 9);
    for (const auto& g : forced.groups()) CHECK(g.size() == 1);
    CHECK_THROWS_AS(build_random_partition(4, 6, 9), PartitionError);
    // A different seed reshuffles the grouping.
    bool differs = false;
    for (std::uint64_t s = 1; s < 10 && !differs; ++s) differs = build_random_partition(10, 3, s).groups() != a.groups();
    CHECK(differs);
}

TEST_CASE("apply_permutation round trip") {
    auto single = single_expert_partition(5);
    for (std::uint32_t k = 0; k < single.dimension(); ++k) CHECK(single.permutation()[k] == k);

    auto p = build_random_partition(8, 3, 11);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        Eigen::VectorXd v = oracle::random_vector(rng, 256);
        auto g = apply_permutation(v, p.permutation(), PermuteDirection::forward);
        CHECK(apply_permutation(g, p.permutation(), PermuteDirection::inverse) == v);
        auto c = apply_permutation(v, p.permutation(), PermuteDirection::inverse);
        CHECK(apply_permutation(c, p.permutation(), PermuteDirection::forward) == v);
    }
    CHECK_THROWS_AS(apply_permutation(Eigen::VectorXd::Zero(3), p.permutation(), PermuteDirection::forward),
                    std::invalid_argument);
}

TEST_CASE("three-expert partition at N=4") {
    // S_z {-2,-1} | {0} | {1,2}
    auto p = build_partition(4, {{0, -2, -1}, {1, 0, 0}, {2, 1, 2}});
    CHECK(p.expert_of_config(from_arrows("uudd")) == 1);
    CHECK(p.expert_of_config(from_arrows("uddd")) == 0);
    CHECK(p.expert_of_config(from_arrows("uuuu")) == 2);
    // gating order: expert blocks, ascending canonical index inside
    const auto& perm = p.permutation();
    for (int e = 0; e < 3; ++e) {
        for (std::size_t k = p.offsets()[e]; k + 1 < p.offsets()[e + 1]; ++k) CHECK(perm[k] < perm[k + 1]);
    }
    const auto pos = std::find(perm.begin(), perm.end(), from_arrows("uudd")) - perm.begin();
    CHECK(static_cast<std::size_t>(pos) >= p.offsets()[1]);
    CHECK(static_cast<std::size_t>(pos) < p.offsets()[2]);
}

TEST_CASE("partition JSON") {
    auto p = build_partition(10, {{0, -5, 0}, {1, 1, 3}, {2, 4, 5}});
    auto again = build_partition(10, intervals_from_json(partition_to_json(p)));
    CHECK(again.permutation() == p.permutation());
    auto r = build_random_partition(10, 3, 4);
    CHECK(build_partition(10, intervals_from_json(partition_to_json(r))).groups() == r.groups());
    CHECK_THROWS(intervals_from_json(R"([{"expert":0,"sz_min":-5,"sz_max":5,"color":1}])"));
    CHECK_THROWS(intervals_from_json("{"));
}
