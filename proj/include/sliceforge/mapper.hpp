#pragma once

// Flexibility / allocability metrics and the greedy VNF-to-node mapper.
//
//   flexibility of a node      = #pending VNFs whose demand fits its capacity
//   network flexibility F^S    = sum of node flexibilities
//   allocability of a VNF      = #nodes whose capacity fits its demand
//   min allocability A^S       = min allocability over pending VNFs
//
// A VNF is placed on the node that maximizes (A^S, F^S) lexicographically
// after the hypothetical placement, lowest node index on ties.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sliceforge/core.hpp"

namespace sliceforge {

// A^S of an empty pending set: every node is equally acceptable.
inline constexpr std::int64_t kUnboundedAllocability = std::numeric_limits<std::int64_t>::max();

constexpr bool fits(Resource demand, Resource capacity) noexcept { return demand <= capacity; }

inline std::int64_t node_flexibility(Resource capacity, std::span<const Resource> pending) {
    return std::ranges::count_if(pending, [&](Resource d) { return fits(d, capacity); });
}

inline std::int64_t network_flexibility(std::span<const Resource> avail, std::span<const Resource> pending) {
    std::int64_t total = 0;
    for (Resource c : avail) total += node_flexibility(c, pending);
    return total;
}

inline std::int64_t vnf_allocability(Resource demand, std::span<const Resource> avail) {
    return std::ranges::count_if(avail, [&](Resource c) { return fits(demand, c); });
}

inline std::int64_t min_allocability(std::span<const Resource> pending, std::span<const Resource> avail) {
    std::int64_t best = kUnboundedAllocability;
    for (Resource d : pending) best = std::min(best, vnf_allocability(d, avail));
    return best;
}

struct NodeScore {
    std::size_t node = 0;
    std::int64_t alloc_after = 0;
    std::int64_t flex_after = 0;

    friend bool operator==(const NodeScore&, const NodeScore&) = default;
};

// Multiset of pending demands kept as sorted distinct values with counts.
class DemandProfile {
public:
    DemandProfile() = default;

    explicit DemandProfile(std::span<const Resource> demands) {
        std::vector<Resource> sorted(demands.begin(), demands.end());
        std::ranges::sort(sorted);
        for (Resource d : sorted) {
            if (values_.empty() || values_.back() != d) {
                values_.push_back(d);
                counts_.push_back(0);
            }
            ++counts_.back();
        }
        size_ = static_cast<std::int64_t>(sorted.size());
    }

    // Removes one occurrence; returns false when the value is absent.
    bool remove(Resource demand) {
        auto it = std::ranges::lower_bound(values_, demand);
        if (it == values_.end() || *it != demand) return false;
        auto& count = counts_[static_cast<std::size_t>(it - values_.begin())];
        if (count == 0) return false;
        --count;
        --size_;
        return true;
    }

    bool empty() const noexcept { return size_ == 0; }
    std::int64_t size() const noexcept { return size_; }
    std::span<const Resource> values() const noexcept { return values_; }
    std::span<const std::int64_t> counts() const noexcept { return counts_; }

    std::vector<Resource> to_multiset() const {
        std::vector<Resource> out;
        for (std::size_t v = 0; v < values_.size(); ++v) out.insert(out.end(), static_cast<std::size_t>(counts_[v]), values_[v]);
        return out;
    }

private:
    std::vector<Resource> values_;
    std::vector<std::int64_t> counts_;
    std::int64_t size_ = 0;
};

// Scores every node that can host `demand`, as if it were placed there.
// Only the chosen node's capacity changes, so F^S and per-value allocability
// are patched from their current totals instead of recounted.
inline std::vector<NodeScore> score_nodes(std::span<const Resource> avail, Resource demand,
                                          const DemandProfile& remaining) {
    const auto values = remaining.values();
    const auto counts = remaining.counts();
    const std::size_t nv = values.size();

    // le_prefix[v] = #pending demands among values[0..v)
    std::vector<std::int64_t> le_prefix(nv + 1, 0);
    for (std::size_t v = 0; v < nv; ++v) le_prefix[v + 1] = le_prefix[v] + counts[v];
    auto count_le = [&](Resource cap) {
        const auto idx = std::ranges::upper_bound(values, cap) - values.begin();
        return le_prefix[static_cast<std::size_t>(idx)];
    };

    std::vector<std::int64_t> alloc(nv, 0);
    std::int64_t flex_base = 0;
    for (Resource cap : avail) {
        flex_base += count_le(cap);
        for (std::size_t v = 0; v < nv && values[v] <= cap; ++v) ++alloc[v];
    }

    std::vector<NodeScore> scores;
    for (std::size_t k = 0; k < avail.size(); ++k) {
        const Resource cap = avail[k];
        if (!fits(demand, cap)) continue;
        const Resource after = cap - demand;
        NodeScore sc{k, kUnboundedAllocability, flex_base - count_le(cap) + count_le(after)};
        for (std::size_t v = 0; v < nv; ++v) {
            if (counts[v] == 0) continue;
            // node k stops hosting values in (after, cap]
            const std::int64_t a = alloc[v] - ((values[v] > after && values[v] <= cap) ? 1 : 0);
            sc.alloc_after = std::min(sc.alloc_after, a);
        }
        scores.push_back(sc);
    }
    return scores;
}

inline std::optional<std::size_t> select_node(std::span<const Resource> avail, Resource demand,
                                              const DemandProfile& remaining) {
    std::optional<NodeScore> best;
    for (const auto& sc : score_nodes(avail, demand, remaining)) {
        if (!best || sc.alloc_after > best->alloc_after ||
            (sc.alloc_after == best->alloc_after && sc.flex_after > best->flex_after))
            best = sc;
    }
    if (!best) return std::nullopt;
    return best->node;
}

// remaining_pending must exclude the VNF being placed.
inline std::optional<std::size_t> select_node(const EnvState& state, Resource demand,
                                              std::span<const Resource> remaining_pending) {
    return select_node(state.avail, demand, DemandProfile(remaining_pending));
}

// Demands of every VNF belonging to a slice that is not yet accommodated.
inline std::vector<Resource> pending_demands(const EnvState& state) {
    std::vector<Resource> out;
    out.reserve(state.pending.size());
    for (std::size_t i = 0; i < state.l; ++i) {
        if (state.is_accommodated(i)) continue;
        for (std::size_t j = 0; j < state.s; ++j) out.push_back(state.pending_demand(i, j));
    }
    return out;
}

// VNF indices of a slice in descending demand order, lower index first on ties.
inline std::vector<std::size_t> vnf_order(const EnvState& state, std::size_t slice) {
    std::vector<std::size_t> order(state.s);
    for (std::size_t j = 0; j < state.s; ++j) order[j] = j;
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
        return state.pending_demand(slice, a) > state.pending_demand(slice, b);
    });
    return order;
}

// Maps every VNF of `slice` against a scratch copy of the capacities. The
// state is never touched; on success the caller hands the placements to
// commit_slice. nullopt means the slice is blocked in this state.
inline std::optional<std::vector<Placement>> map_slice(const EnvState& state, std::size_t slice) {
    if (slice >= state.l) throw UsageError("map_slice: slice index out of range");
    if (state.is_accommodated(slice)) return std::nullopt;

    std::vector<Resource> avail = state.avail;
    DemandProfile remaining(pending_demands(state));
    std::vector<Placement> placements;
    placements.reserve(state.s);
    for (std::size_t vnf : vnf_order(state, slice)) {
        const Resource demand = state.pending_demand(slice, vnf);
        remaining.remove(demand);
        const auto node = select_node(avail, demand, remaining);
        if (!node) return std::nullopt;
        avail[*node] -= demand;
        placements.push_back({vnf, *node});
    }
    return placements;
}

inline bool trial_feasible(const EnvState& state, std::size_t slice) {
    return map_slice(state, slice).has_value();
}

}  // namespace sliceforge
