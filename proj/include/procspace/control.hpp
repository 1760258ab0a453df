#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "procspace/core.hpp"
#include "procspace/noise.hpp"

namespace procspace {

// Finite action set A_h.
class ActionGrid {
public:
    ActionGrid() = default;
    explicit ActionGrid(std::vector<Vec> actions);
    static ActionGrid scalar(const std::vector<double>& values);
    // "a,b,c" for scalars; vector actions as space-separated components: "0 1, 1 0".
    static ActionGrid parse(const std::string& text);

    int size() const noexcept { return static_cast<int>(actions_.size()); }
    int dim() const noexcept { return actions_.empty() ? 0 : static_cast<int>(actions_[0].size()); }
    const Vec& operator[](int k) const { return actions_.at(static_cast<size_t>(k)); }
    const std::vector<Vec>& actions() const noexcept { return actions_; }
    std::string to_string() const;

private:
    std::vector<Vec> actions_;
};

enum class ControlPattern { deterministic, state_feedback, tree_indexed };

// Key of a tree-indexed decision. base_idio = -1 marks decisions shared by a whole common
// batch (they may not read idiosyncratic branches).
struct TreeKey {
    int base_common = 0;
    int base_idio = 0;
    int step = 0;
    std::uint64_t common_prefix = 0;
    std::uint64_t idio_prefix = 0;
    auto operator<=>(const TreeKey&) const = default;
};

// Information available to a control at step k for one particle.
struct ActionQuery {
    int step = 0;
    int common = 0;
    int idio = 0;
    PathView path;
    const NoiseBundle* noise = nullptr;
};

// A single piecewise-constant control on grid steps [first_step, last_step).
class ControlSpec {
public:
    ControlSpec() = default;

    static ControlSpec constant(ActionGrid grid, int action, int first_step, int last_step);
    // table[g][k - first_step]; common batch c uses group min(c / commons_per_group, G - 1).
    static ControlSpec deterministic(ActionGrid grid, std::vector<std::vector<int>> table, int first_step,
                                     int commons_per_group = 1 << 30);
    // Cell of x = path.current()[0] among sorted breakpoints; table[k - first_step][cell].
    static ControlSpec state_feedback(ActionGrid grid, std::vector<double> breakpoints,
                                      std::vector<std::vector<int>> table, int first_step);
    static ControlSpec tree_indexed(ActionGrid grid, std::map<TreeKey, int> table, int first_step,
                                    int last_step, bool batch_shared);

    ControlPattern pattern() const noexcept { return pattern_; }
    const ActionGrid& grid() const noexcept { return grid_; }
    int first_step() const noexcept { return first_; }
    int last_step() const noexcept { return last_; }

    int action_index(const ActionQuery& q) const;
    const Vec& action(const ActionQuery& q) const { return grid_[action_index(q)]; }

    // This control on [first_step, switch_step), tail afterwards.
    ControlSpec concat(const ControlSpec& tail, int switch_step) const;
    // Same control viewed on [from, to).
    ControlSpec restrict(int from, int to) const;

    const std::vector<std::vector<int>>& table() const noexcept { return table_; }
    const std::map<TreeKey, int>& tree_table() const noexcept { return tree_; }
    std::string describe() const;

private:
    ControlPattern pattern_ = ControlPattern::deterministic;
    ActionGrid grid_;
    int first_ = 0;
    int last_ = 0;
    int commons_per_group_ = 1 << 30;
    std::vector<std::vector<int>> table_;
    std::vector<double> breakpoints_;
    std::map<TreeKey, int> tree_;
    bool batch_shared_ = false;
};

enum class FamilyKind { deterministic, common_tree, full_tree, explicit_list };

// Finite family of controls standing in for the admissible class on [first, last).
class ControlFamily {
public:
    ControlFamily() = default;

    // Every group picks its own action sequence: |A|^(groups * steps) members.
    static ControlFamily deterministic(ActionGrid grid, int first_step, int last_step, int groups = 1,
                                       int commons_per_group = 1 << 30);
    // Decisions indexed by (base common batch, step, common branch prefix); requires a tree bundle.
    static ControlFamily common_tree(ActionGrid grid, int first_step, int last_step, const NoiseBundle& noise,
                                     int base_commons);
    // All tree-indexed controls (decisions per base particle and full branch prefix). Solved by
    // backward induction, never enumerated.
    static ControlFamily full_tree(ActionGrid grid, int first_step, int last_step);
    static ControlFamily explicit_list(std::vector<ControlSpec> members, bool concatenation_closed = false);

    FamilyKind kind() const noexcept { return kind_; }
    const ActionGrid& grid() const noexcept { return grid_; }
    int first_step() const noexcept { return first_; }
    int last_step() const noexcept { return last_; }
    bool concatenation_closed() const noexcept;
    bool enumerable() const noexcept { return kind_ != FamilyKind::full_tree; }

    // Number of members (enumerable kinds only; throws UnsupportedError above 2^40).
    std::uint64_t size() const;
    ControlSpec member(std::uint64_t index) const;

    // Head on [first, step) and tail on [step, last).
    std::pair<ControlFamily, ControlFamily> split(int step) const;

    int groups() const noexcept { return groups_; }
    int commons_per_group() const noexcept { return commons_per_group_; }
    // Family restricted to the common batches of one group, re-indexed from 0.
    ControlFamily for_group() const;
    const std::vector<ControlSpec>& members() const noexcept { return list_; }

private:
    FamilyKind kind_ = FamilyKind::deterministic;
    ActionGrid grid_;
    int first_ = 0;
    int last_ = 0;
    int groups_ = 1;
    int commons_per_group_ = 1 << 30;
    std::vector<TreeKey> tree_slots_;
    bool closed_ = false;
    std::vector<ControlSpec> list_;
    // common_tree bookkeeping for split()
    int noise_first_ = 0;
    int m0_ = 0;
    int base_commons_ = 0;
};

}  // namespace procspace
