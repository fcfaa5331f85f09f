#include "pgmoe/spin_basis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pgmoe/errors.hpp"

namespace pgmoe {

namespace {

std::string format_interval(const SzInterval& interval) {
    std::ostringstream out;
    out << "{expert " << interval.expert << ", S_z [" << interval.sz_min << ", " << interval.sz_max << "]}";
    return out.str();
}

// Converts an external S_z value to twice-S_z, rejecting values off the lattice.
int to_twice_sz(double sz, int n_spins, const SzInterval& owner) {
    const double doubled = 2.0 * sz;
    const double rounded = std::round(doubled);
    if (std::abs(doubled - rounded) > 1e-9) {
        throw PartitionError("interval " + format_interval(owner) + " has a bound that is not a multiple of 1/2");
    }
    const int twice = static_cast<int>(rounded);
    if (std::abs(twice) > n_spins || ((twice + n_spins) % 2) != 0) {
        throw PartitionError("interval " + format_interval(owner) + " has a bound outside the S_z values of a " +
                             std::to_string(n_spins) + "-spin chain");
    }
    return twice;
}

}  // namespace

void check_spin_count(int n_spins) {
    if (n_spins < 1 || n_spins > kMaxSpins) {
        throw std::invalid_argument("n_spins must lie in [1, " + std::to_string(kMaxSpins) + "], got " +
                                    std::to_string(n_spins));
    }
}

std::vector<SpinConfiguration> enumerate_configs(int n_spins) {
    check_spin_count(n_spins);
    const std::uint32_t dim = 1u << n_spins;
    std::vector<SpinConfiguration> configs(dim);
    for (std::uint32_t b = 0; b < dim; ++b) {
        configs[b] = SpinConfiguration{b, n_spins};
    }
    return configs;
}

Magnetization magnetization(std::uint32_t index, int n_spins) {
    return Magnetization{2 * std::popcount(index) - n_spins};
}

std::span<const std::uint32_t> SzPartition::configs_of_expert(int expert) const {
    const auto e = static_cast<std::size_t>(expert);
    return std::span<const std::uint32_t>(permutation_).subspan(offsets_.at(e), counts_.at(e));
}

std::vector<SzInterval> SzPartition::intervals() const {
    std::vector<SzInterval> out;
    for (int e = 0; e < expert_count(); ++e) {
        const auto& values = groups_[static_cast<std::size_t>(e)];
        std::size_t start = 0;
        for (std::size_t i = 1; i <= values.size(); ++i) {
            if (i == values.size() || values[i] != values[i - 1] + 2) {
                out.push_back({e, 0.5 * values[start], 0.5 * values[i - 1]});
                start = i;
            }
        }
    }
    return out;
}

SzPartition build_partition(int n_spins, std::span<const SzInterval> intervals) {
    check_spin_count(n_spins);
    if (intervals.empty()) {
        throw PartitionError("partition needs at least one interval");
    }
    int max_expert = -1;
    for (const auto& interval : intervals) {
        if (interval.expert < 0) {
            throw PartitionError("interval " + format_interval(interval) + " has a negative expert id");
        }
        max_expert = std::max(max_expert, interval.expert);
    }
    const int n_experts = max_expert + 1;

    // slot k <-> twice_sz = 2k - N
    const int n_values = n_spins + 1;
    std::vector<int> owner(static_cast<std::size_t>(n_values), -1);
    std::vector<const SzInterval*> owner_interval(static_cast<std::size_t>(n_values), nullptr);
    for (const auto& interval : intervals) {
        const int lo = to_twice_sz(interval.sz_min, n_spins, interval);
        const int hi = to_twice_sz(interval.sz_max, n_spins, interval);
        if (lo > hi) {
            throw PartitionError("interval " + format_interval(interval) + " has sz_min > sz_max");
        }
        for (int t = lo; t <= hi; t += 2) {
            const auto slot = static_cast<std::size_t>((t + n_spins) / 2);
            if (owner[slot] != -1) {
                throw PartitionError("interval " + format_interval(interval) + " overlaps " +
                                     format_interval(*owner_interval[slot]) + " at S_z = " + std::to_string(0.5 * t));
            }
            owner[slot] = interval.expert;
            owner_interval[slot] = &interval;
        }
    }
    for (int k = 0; k < n_values; ++k) {
        if (owner[static_cast<std::size_t>(k)] == -1) {
            const double sz = 0.5 * (2 * k - n_spins);
            std::ostringstream msg;
            msg << "S_z = " << sz << " is not covered by any interval";
            if (k > 0 && owner_interval[static_cast<std::size_t>(k - 1)]) {
                msg << " (gap after " << format_interval(*owner_interval[static_cast<std::size_t>(k - 1)]) << ")";
            }
            throw PartitionError(msg.str());
        }
    }

    SzPartition p;
    p.n_spins_ = n_spins;
    p.groups_.assign(static_cast<std::size_t>(n_experts), {});
    p.expert_of_twice_sz_.assign(static_cast<std::size_t>(2 * n_spins + 1), -1);
    for (int k = 0; k < n_values; ++k) {
        const int t = 2 * k - n_spins;
        const int e = owner[static_cast<std::size_t>(k)];
        p.expert_of_twice_sz_[static_cast<std::size_t>(t + n_spins)] = e;
        p.groups_[static_cast<std::size_t>(e)].push_back(t);
    }
    for (int e = 0; e < n_experts; ++e) {
        if (p.groups_[static_cast<std::size_t>(e)].empty()) {
            throw PartitionError("expert " + std::to_string(e) + " owns no S_z values; expert ids must be 0..k-1");
        }
    }

    const std::uint32_t dim = 1u << n_spins;
    p.expert_of_config_.resize(dim);
    p.counts_.assign(static_cast<std::size_t>(n_experts), 0);
    for (std::uint32_t b = 0; b < dim; ++b) {
        const int e = p.expert_of_twice_sz_[static_cast<std::size_t>(magnetization(b, n_spins).twice_sz + n_spins)];
        p.expert_of_config_[b] = e;
        ++p.counts_[static_cast<std::size_t>(e)];
    }
    p.offsets_.assign(static_cast<std::size_t>(n_experts) + 1, 0);
    for (int e = 0; e < n_experts; ++e) {
        p.offsets_[static_cast<std::size_t>(e) + 1] = p.offsets_[static_cast<std::size_t>(e)] + p.counts_[static_cast<std::size_t>(e)];
    }
    // Experts in id order, ascending canonical index inside each block.
    p.permutation_.resize(dim);
    std::vector<std::size_t> cursor(p.offsets_.begin(), p.offsets_.end() - 1);
    for (std::uint32_t b = 0; b < dim; ++b) {
        p.permutation_[cursor[static_cast<std::size_t>(p.expert_of_config_[b])]++] = b;
    }
    return p;
}

SzPartition build_random_partition(int n_spins, int n_groups, std::uint64_t seed) {
    check_spin_count(n_spins);
    const int n_values = n_spins + 1;
    if (n_groups < 1 || n_groups > n_values) {
        throw PartitionError("cannot split " + std::to_string(n_values) + " distinct S_z values into " +
                             std::to_string(n_groups) + " non-empty groups");
    }
    std::vector<int> slots(static_cast<std::size_t>(n_values));
    std::iota(slots.begin(), slots.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(slots.begin(), slots.end(), rng);

    std::vector<SzInterval> intervals;
    std::uniform_int_distribution<int> pick(0, n_groups - 1);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        // the first n_groups draws seed every group so none is empty
        const int group = i < static_cast<std::size_t>(n_groups) ? static_cast<int>(i) : pick(rng);
        const double sz = 0.5 * (2 * slots[i] - n_spins);
        intervals.push_back({group, sz, sz});
    }
    return build_partition(n_spins, intervals);
}

SzPartition single_expert_partition(int n_spins) {
    const SzInterval all{0, -0.5 * n_spins, 0.5 * n_spins};
    return build_partition(n_spins, std::span<const SzInterval>(&all, 1));
}

Eigen::VectorXd apply_permutation(const Eigen::VectorXd& values, std::span<const std::uint32_t> permutation,
                                  PermuteDirection direction) {
    if (static_cast<std::size_t>(values.size()) != permutation.size()) {
        throw std::invalid_argument("apply_permutation: vector length " + std::to_string(values.size()) +
                                    " does not match permutation length " + std::to_string(permutation.size()));
    }
    Eigen::VectorXd out(values.size());
    for (std::size_t k = 0; k < permutation.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        if (direction == PermuteDirection::forward) {
            out[i] = values[permutation[k]];
        } else {
            out[permutation[k]] = values[i];
        }
    }
    return out;
}

std::string partition_to_json(const SzPartition& partition) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& interval : partition.intervals()) {
        arr.push_back({{"expert", interval.expert}, {"sz_min", interval.sz_min}, {"sz_max", interval.sz_max}});
    }
    return arr.dump();
}

std::vector<SzInterval> intervals_from_json(const std::string& text) {
    const auto arr = nlohmann::json::parse(text);
    if (!arr.is_array()) {
        throw PartitionError("partition spec must be a JSON array");
    }
    std::vector<SzInterval> out;
    for (const auto& item : arr) {
        for (const auto& [key, value] : item.items()) {
            if (key != "expert" && key != "sz_min" && key != "sz_max") {
                throw PartitionError("unknown key in partition spec: " + key);
            }
        }
        out.push_back({item.at("expert").get<int>(), item.at("sz_min").get<double>(), item.at("sz_max").get<double>()});
    }
    return out;
}

std::string describe_intervals(const SzPartition& partition) {
    std::ostringstream out;
    for (int e = 0; e < partition.expert_count(); ++e) {
        if (e) out << " | ";
        out << "E" << e + 1 << ":{";
        const auto& g = partition.groups()[static_cast<std::size_t>(e)];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (i) out << ",";
            out << 0.5 * g[i];
        }
        out << "}";
    }
    return out.str();
}

}  // namespace pgmoe
