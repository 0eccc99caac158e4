#ifndef FDEXPLAIN_CORE_HPP
#define FDEXPLAIN_CORE_HPP

// Variables, value pairs, environments, constraints and CSPs.
//
// An environment is a subset of the universe of (variable, value) pairs. It is
// stored as one bitmask per variable, indexed by position in that variable's
// initial domain, so subset/union/complement are word operations.

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fdx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VarId {
    std::uint32_t index = 0;
    friend auto operator<=>(const VarId&, const VarId&) = default;
};

struct ValuePair {
    VarId var;
    int value = 0;
    friend auto operator<=>(const ValuePair&, const ValuePair&) = default;
};

/// Values accepted in an initial domain unless a wider range is configured.
struct ValueRange {
    int lo = 0;
    int hi = 1023;
};

/// Fixed-size bitset over the positions of one variable's initial domain.
class ValueSet {
public:
    ValueSet() = default;
    explicit ValueSet(std::size_t size, bool full = false)
        : size_(size), words_((size + 63) / 64, full ? ~std::uint64_t{0} : 0) {
        trim();
    }

    std::size_t size() const { return size_; }
    bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
    void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
        return n;
    }
    bool empty() const {
        return std::all_of(words_.begin(), words_.end(), [](auto w) { return w == 0; });
    }
    bool is_subset_of(const ValueSet& o) const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & ~o.words_[i]) return false;
        return true;
    }

    /// Position of the lowest / highest set bit.
    std::optional<std::size_t> first() const {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i]) return i * 64 + static_cast<std::size_t>(std::countr_zero(words_[i]));
        return std::nullopt;
    }
    std::optional<std::size_t> last() const {
        for (std::size_t i = words_.size(); i-- > 0;)
            if (words_[i]) return i * 64 + 63 - static_cast<std::size_t>(std::countl_zero(words_[i]));
        return std::nullopt;
    }

    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t i = 0; i < words_.size(); ++i) {
            auto w = words_[i];
            while (w) {
                f(i * 64 + static_cast<std::size_t>(std::countr_zero(w)));
                w &= w - 1;
            }
        }
    }

    ValueSet& operator&=(const ValueSet& o) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
        return *this;
    }
    ValueSet& operator|=(const ValueSet& o) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
        return *this;
    }
    ValueSet& subtract(const ValueSet& o) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~o.words_[i];
        return *this;
    }
    ValueSet flipped() const {
        ValueSet r = *this;
        for (auto& w : r.words_) w = ~w;
        r.trim();
        return r;
    }

    friend bool operator==(const ValueSet&, const ValueSet&) = default;

private:
    void trim() {
        if (size_ % 64 != 0 && !words_.empty())
            words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
    }

    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

/// The variable table: names and initial domains. Shared by every
/// environment built over it.
class Domains {
public:
    Domains() = default;

    VarId add(std::string name, std::vector<int> values) {
        if (index_.contains(name)) throw Error("duplicate variable '" + name + "'");
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        if (values.empty()) throw Error("empty domain for variable '" + name + "'");
        VarId id{static_cast<std::uint32_t>(names_.size())};
        index_.emplace(name, id);
        names_.push_back(std::move(name));
        offsets_.push_back(total_);
        total_ += values.size();
        values_.push_back(std::move(values));
        return id;
    }

    std::size_t var_count() const { return names_.size(); }
    /// |𝔻|, the number of (variable, value) pairs.
    std::size_t pair_count() const { return total_; }

    const std::string& name(VarId v) const { return names_.at(v.index); }
    std::span<const int> values(VarId v) const { return values_.at(v.index); }
    std::size_t size(VarId v) const { return values_.at(v.index).size(); }

    std::optional<VarId> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    VarId at(const std::string& name) const {
        auto v = find(name);
        if (!v) throw Error("unknown variable '" + name + "'");
        return *v;
    }
    bool contains(VarId v) const { return v.index < names_.size(); }

    /// Position of `value` in the initial domain of `v`.
    std::optional<std::size_t> position(VarId v, int value) const {
        const auto& vals = values_.at(v.index);
        auto it = std::lower_bound(vals.begin(), vals.end(), value);
        if (it == vals.end() || *it != value) return std::nullopt;
        return static_cast<std::size_t>(it - vals.begin());
    }
    bool contains(ValuePair p) const { return contains(p.var) && position(p.var, p.value).has_value(); }

    /// Dense index of a pair in 0..pair_count()-1, variables in declaration order.
    std::size_t pair_index(ValuePair p) const {
        auto pos = contains(p.var) ? position(p.var, p.value) : std::nullopt;
        if (!pos) throw Error("pair " + format(p) + " is outside the initial domains");
        return offsets_[p.var.index] + *pos;
    }
    ValuePair pair_at(std::size_t index) const {
        auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
        auto var = static_cast<std::uint32_t>(it - offsets_.begin() - 1);
        return {VarId{var}, values_[var][index - offsets_[var]]};
    }

    std::string format(ValuePair p) const {
        std::string name = contains(p.var) ? names_[p.var.index] : "#" + std::to_string(p.var.index);
        return "(" + name + "," + std::to_string(p.value) + ")";
    }

    bool operator==(const Domains& o) const { return names_ == o.names_ && values_ == o.values_; }

private:
    std::vector<std::string> names_;
    std::vector<std::vector<int>> values_;
    std::vector<std::size_t> offsets_;
    std::unordered_map<std::string, VarId> index_;
    std::size_t total_ = 0;
};

using DomainsPtr = std::shared_ptr<const Domains>;

/// A subset of 𝔻, held as one ValueSet per variable.
class Environment {
public:
    Environment() = default;

    static Environment empty(DomainsPtr domains) { return Environment(std::move(domains), false); }
    static Environment full(DomainsPtr domains) { return Environment(std::move(domains), true); }

    const Domains& domains() const { return *domains_; }
    const DomainsPtr& domains_ptr() const { return domains_; }

    const ValueSet& of(VarId v) const { return sets_.at(v.index); }
    ValueSet& of(VarId v) { return sets_.at(v.index); }

    bool contains(ValuePair p) const {
        auto pos = domains_->contains(p.var) ? domains_->position(p.var, p.value) : std::nullopt;
        return pos && sets_[p.var.index].test(*pos);
    }
    void insert(ValuePair p) { sets_[p.var.index].set(checked_position(p)); }
    void erase(ValuePair p) { sets_[p.var.index].reset(checked_position(p)); }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& s : sets_) n += s.count();
        return n;
    }
    bool empty() const {
        return std::all_of(sets_.begin(), sets_.end(), [](const auto& s) { return s.empty(); });
    }

    /// Values kept for `v`, ascending.
    std::vector<int> values(VarId v) const {
        std::vector<int> out;
        auto vals = domains_->values(v);
        sets_.at(v.index).for_each([&](std::size_t i) { out.push_back(vals[i]); });
        return out;
    }

    /// All pairs, variables in declaration order, values ascending.
    std::vector<ValuePair> pairs() const {
        std::vector<ValuePair> out;
        for (std::uint32_t x = 0; x < sets_.size(); ++x)
            for (int e : values(VarId{x})) out.push_back({VarId{x}, e});
        return out;
    }

    bool is_subset_of(const Environment& o) const {
        same_universe(o);
        for (std::size_t i = 0; i < sets_.size(); ++i)
            if (!sets_[i].is_subset_of(o.sets_[i])) return false;
        return true;
    }

    Environment& operator&=(const Environment& o) {
        same_universe(o);
        for (std::size_t i = 0; i < sets_.size(); ++i) sets_[i] &= o.sets_[i];
        return *this;
    }
    Environment& operator|=(const Environment& o) {
        same_universe(o);
        for (std::size_t i = 0; i < sets_.size(); ++i) sets_[i] |= o.sets_[i];
        return *this;
    }
    Environment& operator-=(const Environment& o) {
        same_universe(o);
        for (std::size_t i = 0; i < sets_.size(); ++i) sets_[i].subtract(o.sets_[i]);
        return *this;
    }
    friend Environment operator&(Environment a, const Environment& b) { return a &= b; }
    friend Environment operator|(Environment a, const Environment& b) { return a |= b; }
    friend Environment operator-(Environment a, const Environment& b) { return a -= b; }

    friend bool operator==(const Environment& a, const Environment& b) {
        return a.sets_ == b.sets_ && (a.domains_ == b.domains_ || *a.domains_ == *b.domains_);
    }

private:
    Environment(DomainsPtr domains, bool full) : domains_(std::move(domains)) {
        if (!domains_) throw Error("environment needs a variable table");
        sets_.reserve(domains_->var_count());
        for (std::uint32_t x = 0; x < domains_->var_count(); ++x)
            sets_.emplace_back(domains_->size(VarId{x}), full);
    }

    std::size_t checked_position(ValuePair p) const {
        auto pos = domains_->contains(p.var) ? domains_->position(p.var, p.value) : std::nullopt;
        if (!pos) throw Error("pair " + domains_->format(p) + " is outside the initial domains");
        return *pos;
    }
    void same_universe(const Environment& o) const {
        if (domains_ != o.domains_ && !(*domains_ == *o.domains_))
            throw Error("environments over different variable tables");
    }

    DomainsPtr domains_;
    std::vector<ValueSet> sets_;
};

inline Environment make_environment(const DomainsPtr& domains, std::initializer_list<ValuePair> pairs) {
    auto d = Environment::empty(domains);
    for (auto p : pairs) d.insert(p);
    return d;
}

/// { (x,e) ∈ d | x ∈ vars }
inline Environment restrict(const Environment& d, std::span<const VarId> vars) {
    auto out = Environment::empty(d.domains_ptr());
    for (auto v : vars) {
        if (!d.domains().contains(v))
            throw Error("restrict: unknown variable #" + std::to_string(v.index));
        out.of(v) = d.of(v);
    }
    return out;
}
inline Environment restrict(const Environment& d, std::initializer_list<VarId> vars) {
    return restrict(d, std::span<const VarId>(vars.begin(), vars.size()));
}

/// 𝔻 ∖ d
inline Environment complement(const Environment& d) {
    return Environment::full(d.domains_ptr()) - d;
}

enum class Relation { Gt, Lt, Ge, Le, Eq, Neq, NeqConst, Table };

inline const char* relation_symbol(Relation r) {
    switch (r) {
    case Relation::Gt: return ">";
    case Relation::Lt: return "<";
    case Relation::Ge: return ">=";
    case Relation::Le: return "<=";
    case Relation::Eq: return "=";
    case Relation::Neq:
    case Relation::NeqConst: return "!=";
    case Relation::Table: return "table";
    }
    return "?";
}

/// A constraint over `scope`.
///
/// Binary relations read `scope[0] <rel> scope[1] + offset`. NeqConst reads
/// `scope[0] != offset`. Table lists the allowed tuples over `scope`.
struct Constraint {
    std::string label;
    std::vector<VarId> scope;
    Relation relation = Relation::Table;
    int offset = 0;
    std::vector<std::vector<int>> tuples;

    friend bool operator==(const Constraint&, const Constraint&) = default;

    /// Whether a full assignment of the scope (in scope order) satisfies the relation.
    bool accepts(std::span<const int> vals) const {
        if (relation != Relation::Table && vals.size() != (relation == Relation::NeqConst ? 1u : 2u)) return false;
        switch (relation) {
        case Relation::Gt: return vals[0] > vals[1] + offset;
        case Relation::Lt: return vals[0] < vals[1] + offset;
        case Relation::Ge: return vals[0] >= vals[1] + offset;
        case Relation::Le: return vals[0] <= vals[1] + offset;
        case Relation::Eq: return vals[0] == vals[1] + offset;
        case Relation::Neq: return vals[0] != vals[1] + offset;
        case Relation::NeqConst: return vals[0] != offset;
        case Relation::Table:
            return std::any_of(tuples.begin(), tuples.end(), [&](const auto& t) {
                return std::equal(t.begin(), t.end(), vals.begin(), vals.end());
            });
        }
        return false;
    }
};

/// Canonical text of a constraint, e.g. `PM>MP`, `Q1!=Q2+3`, `MA!=4`.
inline std::string default_label(const Domains& dom, const Constraint& c) {
    std::string s;
    if (c.relation == Relation::Table) {
        s = "table(";
        for (std::size_t i = 0; i < c.scope.size(); ++i) s += (i ? "," : "") + dom.name(c.scope[i]);
        return s + ")";
    }
    s = dom.name(c.scope.at(0)) + relation_symbol(c.relation);
    if (c.relation == Relation::NeqConst) return s + std::to_string(c.offset);
    s += dom.name(c.scope.at(1));
    if (c.offset > 0) s += "+" + std::to_string(c.offset);
    if (c.offset < 0) s += "-" + std::to_string(-c.offset);
    return s;
}

class Csp {
public:
    Csp() : domains_(std::make_shared<Domains>()) {}

    VarId add_variable(std::string name, std::vector<int> values, ValueRange range = {}) {
        for (int v : values)
            if (v < range.lo || v > range.hi)
                throw Error("value " + std::to_string(v) + " of '" + name + "' outside " +
                            std::to_string(range.lo) + ".." + std::to_string(range.hi));
        // Environments built earlier keep the previous table alive.
        auto next = std::make_shared<Domains>(*domains_);
        auto id = next->add(std::move(name), std::move(values));
        domains_ = std::move(next);
        return id;
    }
    VarId add_variable(std::string name, int lo, int hi, ValueRange range = {}) {
        if (lo > hi) throw Error("empty domain for variable '" + name + "'");
        std::vector<int> vals;
        for (int v = lo; v <= hi; ++v) vals.push_back(v);
        return add_variable(std::move(name), std::move(vals), range);
    }

    /// Validates and appends; an empty label is replaced by the canonical text.
    const Constraint& add_constraint(Constraint c) {
        for (auto v : c.scope)
            if (!domains_->contains(v)) throw Error("constraint over undeclared variable");
        switch (c.relation) {
        case Relation::NeqConst:
            if (c.scope.size() != 1) throw Error("unary constraint needs one variable");
            break;
        case Relation::Table:
            if (c.scope.empty()) throw Error("table constraint needs a scope");
            for (const auto& t : c.tuples)
                if (t.size() != c.scope.size()) throw Error("table tuple arity does not match scope");
            break;
        default:
            if (c.scope.size() != 2) throw Error("binary constraint needs two variables");
        }
        if (c.label.empty()) c.label = default_label(*domains_, c);
        constraints_.push_back(std::move(c));
        return constraints_.back();
    }
    const Constraint& add(VarId x, Relation r, VarId y, int offset = 0) {
        return add_constraint({"", {x, y}, r, offset, {}});
    }
    const Constraint& add_neq_const(VarId x, int k) {
        return add_constraint({"", {x}, Relation::NeqConst, k, {}});
    }

    const DomainsPtr& domains_ptr() const { return domains_; }
    const Domains& domains() const { return *domains_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }
    std::vector<Constraint>& constraints() { return constraints_; }
    VarId var(const std::string& name) const { return domains_->at(name); }

    Environment full() const { return Environment::full(domains_); }
    Environment none() const { return Environment::empty(domains_); }

    friend bool operator==(const Csp& a, const Csp& b) {
        return *a.domains_ == *b.domains_ && a.constraints_ == b.constraints_;
    }

private:
    DomainsPtr domains_;
    std::vector<Constraint> constraints_;
};

/// A tuple: an environment holding exactly one value per variable of its scope.
using Tuple = Environment;

inline bool is_solution(const Tuple& t, const Csp& csp) {
    std::vector<int> assignment(csp.domains().var_count());
    for (std::uint32_t x = 0; x < assignment.size(); ++x) {
        const auto& s = t.of(VarId{x});
        if (s.count() != 1)
            throw Error("is_solution: variable '" + csp.domains().name(VarId{x}) +
                        "' does not have exactly one value");
        assignment[x] = csp.domains().values(VarId{x})[*s.first()];
    }
    std::vector<int> vals;
    for (const auto& c : csp.constraints()) {
        vals.clear();
        for (auto v : c.scope) vals.push_back(assignment[v.index]);
        if (!c.accepts(vals)) return false;
    }
    return true;
}

inline constexpr std::uint64_t default_enumeration_cap = 10'000'000;

/// Calls `visit` with every full assignment (value positions per variable).
/// Throws when the search space exceeds `cap`.
template <typename Visit>
void for_each_assignment(const Domains& dom, std::uint64_t cap, Visit&& visit) {
    std::uint64_t space = 1;
    for (std::uint32_t x = 0; x < dom.var_count(); ++x) {
        space *= dom.size(VarId{x});
        if (space > cap)
            throw Error("search space exceeds the enumeration cap of " + std::to_string(cap) +
                        "; restrict the domains first");
    }
    std::vector<std::size_t> pos(dom.var_count(), 0);
    while (true) {
        visit(std::as_const(pos));
        std::size_t x = 0;
        for (; x < pos.size(); ++x) {
            if (++pos[x] < dom.size(VarId{static_cast<std::uint32_t>(x)})) break;
            pos[x] = 0;
        }
        if (x == pos.size()) return;
    }
}

/// Brute-force Sol. Tuples come out in odometer order (first variable fastest).
inline std::vector<Tuple> enumerate_solutions(const Csp& csp, std::uint64_t cap = default_enumeration_cap) {
    const auto& dom = csp.domains();
    std::vector<Tuple> out;
    std::vector<int> vals;
    std::vector<int> assignment(dom.var_count());
    for_each_assignment(dom, cap, [&](const std::vector<std::size_t>& pos) {
        for (std::uint32_t x = 0; x < pos.size(); ++x) assignment[x] = dom.values(VarId{x})[pos[x]];
        for (const auto& c : csp.constraints()) {
            vals.clear();
            for (auto v : c.scope) vals.push_back(assignment[v.index]);
            if (!c.accepts(vals)) return;
        }
        auto t = csp.none();
        for (std::uint32_t x = 0; x < pos.size(); ++x) t.of(VarId{x}).set(pos[x]);
        out.push_back(std::move(t));
    });
    return out;
}

/// ⋃S
inline Environment union_solutions(std::span<const Tuple> solutions, const DomainsPtr& domains) {
    auto out = Environment::empty(domains);
    for (const auto& t : solutions) out |= t;
    return out;
}

} // namespace fdx

#endif // FDEXPLAIN_CORE_HPP
