#include "procspace/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace procspace {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

constexpr std::uint64_t kMaxMembers = std::uint64_t{1} << 40;

std::uint64_t checked_power(std::uint64_t base, std::uint64_t exp) {
    std::uint64_t r = 1;
    for (std::uint64_t e = 0; e < exp; ++e) {
        if (base != 0 && r > kMaxMembers / base) throw UnsupportedError("control family too large to enumerate");
        r *= base;
    }
    return r;
}

}  // namespace

ActionGrid::ActionGrid(std::vector<Vec> actions) : actions_(std::move(actions)) {
    if (actions_.empty()) throw DomainError("action grid must be nonempty");
    for (const auto& a : actions_) {
        if (a.size() != actions_[0].size()) throw ShapeError("actions must share one dimension");
    }
}

ActionGrid ActionGrid::scalar(const std::vector<double>& values) {
    std::vector<Vec> a;
    a.reserve(values.size());
    for (double v : values) a.push_back(Vec::Constant(1, v));
    return ActionGrid(std::move(a));
}

ActionGrid ActionGrid::parse(const std::string& text) {
    std::vector<Vec> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream is(trim(item));
        std::vector<double> comps;
        double v = 0.0;
        while (is >> v) comps.push_back(v);
        if (comps.empty() || !is.eof()) throw ParseError("bad action '" + item + "'", 0);
        out.push_back(Eigen::Map<Vec>(comps.data(), static_cast<Eigen::Index>(comps.size())));
    }
    return ActionGrid(std::move(out));
}

std::string ActionGrid::to_string() const {
    std::ostringstream os;
    for (size_t k = 0; k < actions_.size(); ++k) {
        if (k) os << ',';
        for (Eigen::Index j = 0; j < actions_[k].size(); ++j) os << (j ? " " : "") << actions_[k][j];
    }
    return os.str();
}

ControlSpec ControlSpec::constant(ActionGrid grid, int action, int first_step, int last_step) {
    return deterministic(std::move(grid), {std::vector<int>(static_cast<size_t>(last_step - first_step), action)},
                         first_step);
}

ControlSpec ControlSpec::deterministic(ActionGrid grid, std::vector<std::vector<int>> table, int first_step,
                                       int commons_per_group) {
    if (table.empty()) throw DomainError("deterministic control needs at least one group");
    ControlSpec s;
    s.pattern_ = ControlPattern::deterministic;
    s.first_ = first_step;
    s.last_ = first_step + static_cast<int>(table[0].size());
    for (const auto& row : table) {
        if (row.size() != table[0].size()) throw ShapeError("group tables must cover the same steps");
        for (int a : row) {
            if (a < 0 || a >= grid.size()) throw RangeError("action index outside grid");
        }
    }
    s.grid_ = std::move(grid);
    s.table_ = std::move(table);
    s.commons_per_group_ = std::max(1, commons_per_group);
    return s;
}

ControlSpec ControlSpec::state_feedback(ActionGrid grid, std::vector<double> breakpoints,
                                        std::vector<std::vector<int>> table, int first_step) {
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end())) throw DomainError("breakpoints must be sorted");
    ControlSpec s;
    s.pattern_ = ControlPattern::state_feedback;
    s.first_ = first_step;
    s.last_ = first_step + static_cast<int>(table.size());
    for (const auto& row : table) {
        if (row.size() != breakpoints.size() + 1) throw ShapeError("feedback table needs one entry per cell");
        for (int a : row) {
            if (a < 0 || a >= grid.size()) throw RangeError("action index outside grid");
        }
    }
    s.grid_ = std::move(grid);
    s.breakpoints_ = std::move(breakpoints);
    s.table_ = std::move(table);
    return s;
}

ControlSpec ControlSpec::tree_indexed(ActionGrid grid, std::map<TreeKey, int> table, int first_step, int last_step,
                                      bool batch_shared) {
    for (const auto& [k, a] : table) {
        if (a < 0 || a >= grid.size()) throw RangeError("action index outside grid");
    }
    ControlSpec s;
    s.pattern_ = ControlPattern::tree_indexed;
    s.grid_ = std::move(grid);
    s.first_ = first_step;
    s.last_ = last_step;
    s.tree_ = std::move(table);
    s.batch_shared_ = batch_shared;
    return s;
}

int ControlSpec::action_index(const ActionQuery& q) const {
    if (q.step < first_ || q.step >= last_) {
        throw RangeError("control queried at step " + std::to_string(q.step) + " outside [" + std::to_string(first_) +
                         ", " + std::to_string(last_) + ")");
    }
    const int k = q.step - first_;
    switch (pattern_) {
        case ControlPattern::deterministic: {
            const int g = std::min(q.common / commons_per_group_, static_cast<int>(table_.size()) - 1);
            return table_[static_cast<size_t>(g)][static_cast<size_t>(k)];
        }
        case ControlPattern::state_feedback: {
            const double x = q.path.current()[0];
            const auto cell = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x) - breakpoints_.begin();
            return table_[static_cast<size_t>(k)][static_cast<size_t>(cell)];
        }
        case ControlPattern::tree_indexed: {
            if (!q.noise) throw ContractError("tree-indexed control needs the noise bundle");
            const TreeSlot s = q.noise->slot(q.common, q.idio);
            TreeKey key{s.base_common, batch_shared_ ? -1 : s.base_idio, q.step, q.noise->common_prefix(q.common, q.step),
                        batch_shared_ ? 0 : q.noise->idio_prefix(q.idio, q.step)};
            const auto it = tree_.find(key);
            if (it == tree_.end()) throw ContractError("tree-indexed control undefined at step " + std::to_string(q.step));
            return it->second;
        }
    }
    return 0;
}

ControlSpec ControlSpec::concat(const ControlSpec& tail, int switch_step) const {
    if (tail.pattern_ != pattern_) throw UnsupportedError("concatenation of controls with different patterns");
    if (switch_step < first_ || switch_step > tail.last_ || tail.first_ > switch_step) {
        throw RangeError("concatenation step outside the controls' ranges");
    }
    if (switch_step > last_) throw RangeError("head control does not reach the switch step");
    ControlSpec out = *this;
    out.last_ = tail.last_;
    if (pattern_ == ControlPattern::tree_indexed) {
        if (tail.batch_shared_ != batch_shared_) throw UnsupportedError("mixed tree information patterns");
        out.tree_.clear();
        for (const auto& [k, a] : tree_) {
            if (k.step < switch_step) out.tree_.emplace(k, a);
        }
        for (const auto& [k, a] : tail.tree_) {
            if (k.step >= switch_step) out.tree_.emplace(k, a);
        }
        return out;
    }
    if (pattern_ == ControlPattern::state_feedback) {
        if (tail.breakpoints_ != breakpoints_) throw UnsupportedError("feedback tables with different cells");
        out.table_.assign(table_.begin(), table_.begin() + (switch_step - first_));
        out.table_.insert(out.table_.end(), tail.table_.begin() + (switch_step - tail.first_), tail.table_.end());
        return out;
    }
    const size_t groups = std::max(table_.size(), tail.table_.size());
    if ((table_.size() != groups && table_.size() != 1) || (tail.table_.size() != groups && tail.table_.size() != 1)) {
        throw ShapeError("group counts differ in concatenation");
    }
    if (groups > 1 && table_.size() == groups && tail.table_.size() == groups &&
        commons_per_group_ != tail.commons_per_group_) {
        throw ShapeError("group layouts differ in concatenation");
    }
    out.commons_per_group_ = table_.size() == groups ? commons_per_group_ : tail.commons_per_group_;
    out.table_.assign(groups, {});
    for (size_t g = 0; g < groups; ++g) {
        const auto& h = table_[std::min(g, table_.size() - 1)];
        const auto& t = tail.table_[std::min(g, tail.table_.size() - 1)];
        auto& row = out.table_[g];
        row.assign(h.begin(), h.begin() + (switch_step - first_));
        row.insert(row.end(), t.begin() + (switch_step - tail.first_), t.end());
    }
    return out;
}

ControlSpec ControlSpec::restrict(int from, int to) const {
    if (from < first_ || to > last_ || from > to) throw RangeError("restriction outside control range");
    ControlSpec out = *this;
    out.first_ = from;
    out.last_ = to;
    if (pattern_ == ControlPattern::tree_indexed) {
        std::erase_if(out.tree_, [&](const auto& kv) { return kv.first.step < from || kv.first.step >= to; });
        return out;
    }
    if (pattern_ == ControlPattern::state_feedback) {
        out.table_.assign(table_.begin() + (from - first_), table_.begin() + (to - first_));
        return out;
    }
    for (auto& row : out.table_) {
        row.assign(row.begin() + (from - first_), row.begin() + (to - first_));
    }
    return out;
}

std::string ControlSpec::describe() const {
    std::ostringstream os;
    switch (pattern_) {
        case ControlPattern::deterministic:
            os << "deterministic";
            for (size_t g = 0; g < table_.size(); ++g) {
                os << (g ? ";" : "[");
                for (size_t k = 0; k < table_[g].size(); ++k) os << (k ? " " : "") << table_[g][k];
            }
            os << "]";
            break;
        case ControlPattern::state_feedback:
            os << "feedback[" << table_.size() << " steps x " << breakpoints_.size() + 1 << " cells]";
            break;
        case ControlPattern::tree_indexed:
            os << "tree[" << tree_.size() << " decisions]";
            break;
    }
    return os.str();
}

ControlFamily ControlFamily::deterministic(ActionGrid grid, int first_step, int last_step, int groups,
                                           int commons_per_group) {
    if (last_step <= first_step) throw RangeError("control family needs at least one step");
    if (groups <= 0) throw ParameterError("groups must be positive");
    ControlFamily f;
    f.kind_ = FamilyKind::deterministic;
    f.grid_ = std::move(grid);
    f.first_ = first_step;
    f.last_ = last_step;
    f.groups_ = groups;
    f.commons_per_group_ = std::max(1, commons_per_group);
    return f;
}

ControlFamily ControlFamily::common_tree(ActionGrid grid, int first_step, int last_step, const NoiseBundle& noise,
                                         int base_commons) {
    if (noise.mode() != NoiseMode::tree) throw ContractError("common-tree family needs a tree noise bundle");
    if (first_step < noise.first_step()) throw RangeError("family starts before the noise tree");
    ControlFamily f;
    f.kind_ = FamilyKind::common_tree;
    f.grid_ = std::move(grid);
    f.first_ = first_step;
    f.last_ = last_step;
    f.noise_first_ = noise.first_step();
    f.m0_ = noise.common_dim();
    f.base_commons_ = base_commons;
    for (int b = 0; b < base_commons; ++b) {
        for (int k = first_step; k < last_step; ++k) {
            const std::uint64_t n = std::uint64_t{1} << (f.m0_ * (k - f.noise_first_));
            for (std::uint64_t pre = 0; pre < n; ++pre) f.tree_slots_.push_back(TreeKey{b, -1, k, pre, 0});
        }
    }
    return f;
}

ControlFamily ControlFamily::full_tree(ActionGrid grid, int first_step, int last_step) {
    ControlFamily f;
    f.kind_ = FamilyKind::full_tree;
    f.grid_ = std::move(grid);
    f.first_ = first_step;
    f.last_ = last_step;
    return f;
}

ControlFamily ControlFamily::explicit_list(std::vector<ControlSpec> members, bool concatenation_closed) {
    if (members.empty()) throw DomainError("control family must be nonempty");
    ControlFamily f;
    f.kind_ = FamilyKind::explicit_list;
    f.grid_ = members[0].grid();
    f.first_ = members[0].first_step();
    f.last_ = members[0].last_step();
    for (const auto& m : members) {
        if (m.first_step() != f.first_ || m.last_step() != f.last_) {
            throw ShapeError("family members must cover the same steps");
        }
    }
    f.list_ = std::move(members);
    f.closed_ = concatenation_closed;
    return f;
}

bool ControlFamily::concatenation_closed() const noexcept {
    return kind_ == FamilyKind::explicit_list ? closed_ : true;
}

std::uint64_t ControlFamily::size() const {
    switch (kind_) {
        case FamilyKind::deterministic:
            return checked_power(static_cast<std::uint64_t>(grid_.size()),
                                 static_cast<std::uint64_t>(groups_) * static_cast<std::uint64_t>(last_ - first_));
        case FamilyKind::common_tree:
            return checked_power(static_cast<std::uint64_t>(grid_.size()), tree_slots_.size());
        case FamilyKind::explicit_list:
            return list_.size();
        case FamilyKind::full_tree:
            break;
    }
    throw UnsupportedError("full tree families are solved by backward induction, not enumerated");
}

ControlSpec ControlFamily::member(std::uint64_t index) const {
    if (index >= size()) throw RangeError("family member index out of range");
    const auto base = static_cast<std::uint64_t>(grid_.size());
    switch (kind_) {
        case FamilyKind::deterministic: {
            std::vector<std::vector<int>> table(static_cast<size_t>(groups_),
                                                std::vector<int>(static_cast<size_t>(last_ - first_)));
            for (auto& row : table) {
                for (int& a : row) {
                    a = static_cast<int>(index % base);
                    index /= base;
                }
            }
            return ControlSpec::deterministic(grid_, std::move(table), first_, commons_per_group_);
        }
        case FamilyKind::common_tree: {
            std::map<TreeKey, int> table;
            for (const auto& key : tree_slots_) {
                table.emplace(key, static_cast<int>(index % base));
                index /= base;
            }
            return ControlSpec::tree_indexed(grid_, std::move(table), first_, last_, true);
        }
        case FamilyKind::explicit_list:
            return list_[static_cast<size_t>(index)];
        case FamilyKind::full_tree:
            break;
    }
    throw UnsupportedError("full tree families are not enumerable");
}

std::pair<ControlFamily, ControlFamily> ControlFamily::split(int step) const {
    if (step <= first_ || step >= last_) throw RangeError("split step must lie strictly inside the family range");
    ControlFamily head = *this;
    ControlFamily tail = *this;
    head.last_ = step;
    tail.first_ = step;
    if (kind_ == FamilyKind::common_tree) {
        head.tree_slots_.clear();
        tail.tree_slots_.clear();
        for (const auto& k : tree_slots_) (k.step < step ? head.tree_slots_ : tail.tree_slots_).push_back(k);
    } else if (kind_ == FamilyKind::explicit_list) {
        for (auto& m : head.list_) m = m.restrict(first_, step);
        for (auto& m : tail.list_) m = m.restrict(step, last_);
    }
    return {head, tail};
}

ControlFamily ControlFamily::for_group() const {
    if (kind_ != FamilyKind::deterministic) throw UnsupportedError("per-group restriction needs a deterministic family");
    return deterministic(grid_, first_, last_, 1);
}

}  // namespace procspace
