#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "types.hpp"

namespace bubblesim {

/// Kinds of machine levels, ordered from the whole machine downward.
/// The ordinal is a rank: kinds along any root-to-leaf path must strictly
/// increase in rank, though a topology need not use every kind.
enum class level_kind : int {
    machine = 0,
    numa = 1,
    die = 2,
    core = 3,
    smt = 4,
};

inline int kind_rank(level_kind k) { return static_cast<int>(k); }

inline std::string_view kind_name(level_kind k) {
    switch (k) {
    case level_kind::machine: return "machine";
    case level_kind::numa: return "numa";
    case level_kind::die: return "die";
    case level_kind::core: return "core";
    case level_kind::smt: return "smt";
    }
    return "?";
}

inline std::optional<level_kind> kind_from_name(std::string_view s) {
    for (level_kind k : {level_kind::machine, level_kind::numa, level_kind::die,
                         level_kind::core, level_kind::smt}) {
        if (s == kind_name(k)) return k;
    }
    return std::nullopt;
}

struct level_spec {
    level_kind kind;
    std::uint32_t arity; // element count per parent; 1 for the machine root

    bool operator==(const level_spec&) const = default;
};

/// Uniform-arity level list, machine first: {machine:1, numa:4, core:4}
/// describes one machine with 4 NUMA nodes of 4 cores each.
using topology_spec = std::vector<level_spec>;

/// Convenience builder prepending the implicit machine root, matching the
/// config file notation where the machine level is omitted.
inline topology_spec machine_of(std::initializer_list<level_spec> below) {
    topology_spec s{{level_kind::machine, 1}};
    s.insert(s.end(), below.begin(), below.end());
    return s;
}

struct topology_node {
    node_id id = no_node;
    level_kind kind = level_kind::machine;
    std::uint32_t level = 0; // depth index, root = 0
    node_id parent = no_node;
    std::vector<node_id> children;
    cpu_id cpu = no_cpu; // dense leaf index; no_cpu for interior nodes

    bool is_leaf() const { return children.empty(); }
};

/// A hierarchical machine as a tree of levels. Every node owns exactly one
/// task list (runqueue ids equal node ids). Immutable after construction and
/// safe to share read-only.
class topology {
public:
    topology() = default;

    explicit topology(const topology_spec& spec) {
        validate_spec(spec);
        levels_ = spec;

        // Preorder depth-first construction: ids and the cpu order are
        // deterministic functions of the spec.
        build_subtree(no_node, 0);
        for (auto& n : nodes_) {
            if (n.is_leaf()) {
                n.cpu = static_cast<cpu_id>(cpus_.size());
                cpus_.push_back(n.id);
            }
        }
        coverage_.resize(cpus_.size());
        for (cpu_id c = 0; c < cpus_.size(); ++c) {
            node_id cur = cpus_[c];
            while (cur != no_node) {
                coverage_[c].push_back(cur);
                cur = nodes_[cur].parent;
            }
        }
        leaf_counts_.assign(nodes_.size(), 0);
        for (node_id leaf : cpus_) {
            node_id cur = leaf;
            while (cur != no_node) {
                ++leaf_counts_[cur];
                cur = nodes_[cur].parent;
            }
        }
        // Preorder ids make every subtree's leaves a contiguous cpu range.
        first_cpu_.assign(nodes_.size(), 0);
        for (node_id id = static_cast<node_id>(nodes_.size()); id-- > 0;) {
            const auto& n = nodes_[id];
            first_cpu_[id] = n.is_leaf() ? n.cpu : first_cpu_[n.children.front()];
        }
    }

    static topology build(const topology_spec& spec) { return topology(spec); }

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_cpus() const { return cpus_.size(); }
    std::uint32_t depth() const { return static_cast<std::uint32_t>(levels_.size()); }
    node_id root() const { return 0; }
    const topology_node& node(node_id id) const { return nodes_.at(id); }
    const std::vector<node_id>& cpu_nodes() const { return cpus_; }
    const std::vector<level_spec>& levels() const { return levels_; }
    node_id leaf_node(cpu_id cpu) const { return cpus_.at(cpu); }

    /// Number of leaves contained in the subtree rooted at `id`.
    std::uint32_t leaves_under(node_id id) const { return leaf_counts_.at(id); }

    /// Processors covered by the list of `id`, as a contiguous [first, count)
    /// cpu index range.
    std::pair<cpu_id, std::uint32_t> cpu_span(node_id id) const {
        return {first_cpu_.at(id), leaf_counts_.at(id)};
    }

    /// Runqueue chain a processor may draw tasks from, most local first,
    /// ending at the root list. Length equals depth().
    const std::vector<node_id>& coverage(cpu_id cpu) const {
        if (cpu >= cpus_.size())
            throw config_error("coverage: not a processor index: " + std::to_string(cpu));
        return coverage_[cpu];
    }

    /// Deepest node whose subtree contains both processors.
    node_id common_level(cpu_id a, cpu_id b) const {
        const auto& pa = coverage(a);
        const auto& pb = coverage(b);
        // Paths end at the root; walk back from the root while they agree.
        std::size_t ia = pa.size(), ib = pb.size();
        node_id common = root();
        while (ia > 0 && ib > 0 && pa[ia - 1] == pb[ib - 1]) {
            common = pa[ia - 1];
            --ia;
            --ib;
        }
        return common;
    }

    /// Ancestor of `cpu` with kind numa; the root when the machine has no
    /// NUMA level (single memory domain).
    node_id numa_node_of(cpu_id cpu) const {
        for (node_id id : coverage(cpu))
            if (nodes_[id].kind == level_kind::numa) return id;
        return root();
    }

    bool in_subtree(node_id ancestor, node_id id) const {
        while (id != no_node) {
            if (id == ancestor) return true;
            id = nodes_[id].parent;
        }
        return false;
    }

    /// Child of `ancestor` whose subtree contains `id` (pre: id is a strict
    /// descendant of ancestor).
    node_id child_toward(node_id ancestor, node_id id) const {
        node_id prev = id;
        while (nodes_[prev].parent != ancestor) {
            prev = nodes_[prev].parent;
            require(prev != no_node, "child_toward: not a descendant");
        }
        return prev;
    }

private:
    static void validate_spec(const topology_spec& spec) {
        if (spec.empty())
            throw config_error("topology spec is empty");
        if (spec.front().kind != level_kind::machine || spec.front().arity != 1)
            throw config_error("topology spec must start with a single machine level");
        int prev_rank = kind_rank(level_kind::machine);
        for (std::size_t i = 1; i < spec.size(); ++i) {
            const auto& l = spec[i];
            if (l.arity == 0)
                throw config_error("topology level '" + std::string(kind_name(l.kind)) +
                                   "' has zero fan-out");
            if (kind_rank(l.kind) <= prev_rank)
                throw config_error("topology level kinds must strictly descend: '" +
                                   std::string(kind_name(l.kind)) + "' out of order");
            prev_rank = kind_rank(l.kind);
        }
    }

    node_id build_subtree(node_id parent, std::uint32_t level) {
        node_id id = static_cast<node_id>(nodes_.size());
        topology_node n;
        n.id = id;
        n.kind = levels_[level].kind;
        n.level = level;
        n.parent = parent;
        nodes_.push_back(n);
        if (level + 1 < levels_.size()) {
            for (std::uint32_t i = 0; i < levels_[level + 1].arity; ++i) {
                node_id child = build_subtree(id, level + 1);
                nodes_[id].children.push_back(child);
            }
        }
        return id;
    }

    std::vector<level_spec> levels_;
    std::vector<topology_node> nodes_;
    std::vector<node_id> cpus_;
    std::vector<std::vector<node_id>> coverage_;
    std::vector<std::uint32_t> leaf_counts_;
    std::vector<cpu_id> first_cpu_;
};

} // namespace bubblesim
