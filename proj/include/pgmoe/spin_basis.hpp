#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pgmoe {

// 2^24 coefficients is the largest basis we are willing to allocate.
inline constexpr int kMaxSpins = 24;

// One basis state of the chain. Bit i-1 of `index` is spin i; 1 means up.
struct SpinConfiguration {
    std::uint32_t index = 0;
    int n_spins = 0;

    bool spin_up(int site) const { return (index >> site) & 1u; }
    // s_i in {-1, +1}
    int spin(int site) const { return spin_up(site) ? 1 : -1; }
};

void check_spin_count(int n_spins);

std::vector<SpinConfiguration> enumerate_configs(int n_spins);

// Magnetization stored as 2*S_z = #up - #down, an integer in [-N, N].
struct Magnetization {
    int twice_sz = 0;

    double sz() const { return 0.5 * twice_sz; }
    friend bool operator==(Magnetization, Magnetization) = default;
};

Magnetization magnetization(std::uint32_t index, int n_spins);
inline Magnetization magnetization(const SpinConfiguration& config) {
    return magnetization(config.index, config.n_spins);
}

// Closed S_z interval owned by one expert. S_z values are given in natural
// (half-integer capable) units; they must lie on the S_z lattice of the chain.
struct SzInterval {
    int expert = 0;
    double sz_min = 0.0;
    double sz_max = 0.0;
};

class SzPartition {
public:
    int n_spins() const { return n_spins_; }
    int expert_count() const { return static_cast<int>(counts_.size()); }
    std::size_t dimension() const { return expert_of_config_.size(); }

    int expert_of_config(std::uint32_t index) const { return expert_of_config_[index]; }
    // Indexed by twice_sz + N.
    int expert_of_twice_sz(int twice_sz) const { return expert_of_twice_sz_.at(twice_sz + n_spins_); }

    // permutation()[k] is the canonical index of the k-th coefficient in
    // gating (expert-concatenated) order.
    const std::vector<std::uint32_t>& permutation() const { return permutation_; }
    const std::vector<std::size_t>& counts() const { return counts_; }
    // Offset of each expert's block in gating order; size expert_count()+1.
    const std::vector<std::size_t>& offsets() const { return offsets_; }
    std::span<const std::uint32_t> configs_of_expert(int expert) const;

    // twice-S_z values owned by each expert, ascending.
    const std::vector<std::vector<int>>& groups() const { return groups_; }

    // Minimal interval list: runs of consecutive S_z within a group.
    std::vector<SzInterval> intervals() const;

private:
    friend SzPartition build_partition(int n_spins, std::span<const SzInterval> intervals);

    int n_spins_ = 0;
    std::vector<int> expert_of_twice_sz_;
    std::vector<int> expert_of_config_;
    std::vector<std::uint32_t> permutation_;
    std::vector<std::size_t> counts_;
    std::vector<std::size_t> offsets_;
    std::vector<std::vector<int>> groups_;
};

// Expert ids must be 0..k-1, each used at least once. Intervals must be
// disjoint and together cover every S_z value in [-N/2, N/2].
SzPartition build_partition(int n_spins, std::span<const SzInterval> intervals);

inline SzPartition build_partition(int n_spins, std::initializer_list<SzInterval> intervals) {
    return build_partition(n_spins, std::span<const SzInterval>(intervals.begin(), intervals.size()));
}

// Groups distinct S_z values into n_groups non-empty, generally
// non-contiguous sets. Deterministic given seed.
SzPartition build_random_partition(int n_spins, int n_groups, std::uint64_t seed);

SzPartition single_expert_partition(int n_spins);

enum class PermuteDirection { forward, inverse };

// forward: canonical -> gating order; inverse: gating -> canonical order.
Eigen::VectorXd apply_permutation(const Eigen::VectorXd& values, std::span<const std::uint32_t> permutation,
                                  PermuteDirection direction);

// JSON array of {expert, sz_min, sz_max}.
std::string partition_to_json(const SzPartition& partition);
std::vector<SzInterval> intervals_from_json(const std::string& text);

std::string describe_intervals(const SzPartition& partition);

}  // namespace pgmoe
