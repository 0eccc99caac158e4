#ifndef FDEXPLAIN_INDEXICAL_HPP
#define FDEXPLAIN_INDEXICAL_HPP

// Local consistency operators of the form "X in r" and their deduction rules.
//
// Every operator reads the current domains of its dependencies and yields the
// values its output variable may keep. Its dual is described by one deduction
// rule per removable head: (x,e) <- B, where B is the set of pairs whose
// removal entails the removal of (x,e). An operator keeps e exactly when the
// body of the rule for (x,e) is not fully removed; rule-free heads are always
// kept. The evaluators below implement the same function without walking
// rule bodies, and the tests check the two agree.

#include "core.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace fdx {

namespace expr {

/// X in lo..hi
struct RangeConst {
    int lo = 0;
    int hi = 0;
    friend bool operator==(const RangeConst&, const RangeConst&) = default;
};
/// X in min(Y)+k..infinity
struct MinPlus {
    VarId y;
    int k = 0;
    friend bool operator==(const MinPlus&, const MinPlus&) = default;
};
/// X in -infinity..max(Y)-k
struct MaxMinus {
    VarId y;
    int k = 0;
    friend bool operator==(const MaxMinus&, const MaxMinus&) = default;
};
/// X in -{k}
struct NotConst {
    int k = 0;
    friend bool operator==(const NotConst&, const NotConst&) = default;
};
/// X in -{val(Y)+k}: removes (X, v+k) once Y is bound to v.
struct NotVal {
    VarId y;
    int k = 0;
    friend bool operator==(const NotVal&, const NotVal&) = default;
};
/// X in supports(Y): keeps the X values with a supporting Y value in a
/// binary table. `allowed[i]` holds the Y positions compatible with the
/// i-th value of X.
struct Supports {
    VarId y;
    std::vector<ValueSet> allowed;
    friend bool operator==(const Supports&, const Supports&) = default;
};

} // namespace expr

using IndexicalExpr =
    std::variant<expr::RangeConst, expr::MinPlus, expr::MaxMinus, expr::NotConst, expr::NotVal, expr::Supports>;

struct Operator {
    std::uint32_t id = 0;
    VarId output;
    std::vector<VarId> deps;
    IndexicalExpr expr;
    std::string constraint_label;
    std::size_t constraint_index = 0;
};

struct DeductionRule {
    ValuePair head;
    std::vector<ValuePair> body;
    std::uint32_t operator_id = 0;
    std::string constraint_label;

    friend bool operator==(const DeductionRule&, const DeductionRule&) = default;
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline std::vector<VarId> deps_of(const IndexicalExpr& e) {
    return std::visit(overloaded{
                          [](const expr::RangeConst&) { return std::vector<VarId>{}; },
                          [](const expr::NotConst&) { return std::vector<VarId>{}; },
                          [](const auto& with_y) { return std::vector<VarId>{with_y.y}; },
                      },
                      e);
}

/// Positions of D_x holding a value >= lo.
inline ValueSet at_least(std::span<const int> dom, long long lo) {
    ValueSet s(dom.size());
    for (std::size_t i = dom.size(); i-- > 0 && dom[i] >= lo;) s.set(i);
    return s;
}
/// Positions of D_x holding a value <= hi.
inline ValueSet at_most(std::span<const int> dom, long long hi) {
    ValueSet s(dom.size());
    for (std::size_t i = 0; i < dom.size() && dom[i] <= hi; ++i) s.set(i);
    return s;
}

inline std::string offset_text(int k) {
    if (k > 0) return "+" + std::to_string(k);
    if (k < 0) return "-" + std::to_string(-k);
    return "";
}

} // namespace detail

/// Values of `op.output` kept by the operator in environment `d`.
inline ValueSet kept_values(const Operator& op, const Environment& d) {
    const auto& dom = d.domains();
    auto dx = dom.values(op.output);
    return std::visit(
        detail::overloaded{
            [&](const expr::RangeConst& e) {
                auto s = detail::at_least(dx, e.lo);
                s &= detail::at_most(dx, e.hi);
                return s;
            },
            [&](const expr::MinPlus& e) {
                auto first = d.of(e.y).first();
                if (!first) return ValueSet(dx.size());
                return detail::at_least(dx, static_cast<long long>(dom.values(e.y)[*first]) + e.k);
            },
            [&](const expr::MaxMinus& e) {
                auto last = d.of(e.y).last();
                if (!last) return ValueSet(dx.size());
                return detail::at_most(dx, static_cast<long long>(dom.values(e.y)[*last]) - e.k);
            },
            [&](const expr::NotConst& e) {
                ValueSet s(dx.size(), true);
                if (auto pos = dom.position(op.output, e.k)) s.reset(*pos);
                return s;
            },
            [&](const expr::NotVal& e) {
                const auto& dy = d.of(e.y);
                auto n = dy.count();
                if (n == 0) return ValueSet(dx.size());
                ValueSet s(dx.size(), true);
                if (n == 1) {
                    long long v = static_cast<long long>(dom.values(e.y)[*dy.first()]) + e.k;
                    if (v >= INT32_MIN && v <= INT32_MAX)
                        if (auto pos = dom.position(op.output, static_cast<int>(v))) s.reset(*pos);
                }
                return s;
            },
            [&](const expr::Supports& e) {
                ValueSet s(dx.size());
                const auto& dy = d.of(e.y);
                for (std::size_t i = 0; i < dx.size(); ++i) {
                    auto common = e.allowed[i];
                    common &= dy;
                    if (!common.empty()) s.set(i);
                }
                return s;
            },
        },
        op.expr);
}

/// r(d): the kept values on the output variable, the full initial domain elsewhere.
inline Environment eval_operator(const Operator& op, const Environment& d) {
    auto r = Environment::full(d.domains_ptr());
    r.of(op.output) = kept_values(op, d);
    return r;
}

/// The canonical rule set of `op`, heads in ascending value order.
inline std::vector<DeductionRule> rules_for(const Operator& op, const Domains& dom) {
    std::vector<DeductionRule> rules;
    auto dx = dom.values(op.output);
    auto rule = [&](int e) -> DeductionRule& {
        rules.push_back({{op.output, e}, {}, op.id, op.constraint_label});
        return rules.back();
    };
    auto body_where = [&](DeductionRule& r, VarId y, auto pred) {
        for (int f : dom.values(y))
            if (pred(f)) r.body.push_back({y, f});
    };
    std::visit(detail::overloaded{
                   [&](const expr::RangeConst& e) {
                       for (int v : dx)
                           if (v < e.lo || v > e.hi) rule(v);
                   },
                   [&](const expr::MinPlus& e) {
                       for (int v : dx)
                           body_where(rule(v), e.y, [&](int f) { return static_cast<long long>(f) <= static_cast<long long>(v) - e.k; });
                   },
                   [&](const expr::MaxMinus& e) {
                       for (int v : dx)
                           body_where(rule(v), e.y, [&](int f) { return static_cast<long long>(f) >= static_cast<long long>(v) + e.k; });
                   },
                   [&](const expr::NotConst& e) {
                       if (dom.position(op.output, e.k)) rule(e.k);
                   },
                   [&](const expr::NotVal& e) {
                       for (int v : dx)
                           body_where(rule(v), e.y, [&](int f) { return static_cast<long long>(f) + e.k != v; });
                   },
                   [&](const expr::Supports& e) {
                       auto dy = dom.values(e.y);
                       for (std::size_t i = 0; i < dx.size(); ++i) {
                           auto& r = rule(dx[i]);
                           e.allowed[i].for_each([&](std::size_t j) { r.body.push_back({e.y, dy[j]}); });
                       }
                   },
               },
               op.expr);
    return rules;
}

/// r̃ applied to a removed set: the output pairs whose removal follows from
/// `removed`, i.e. complement(r(complement(removed))) on the output variable.
inline Environment dual_apply(const Operator& op, const Environment& removed) {
    auto out = Environment::empty(removed.domains_ptr());
    out.of(op.output) = kept_values(op, complement(removed)).flipped();
    return out;
}

/// Human-readable "X in r" form, e.g. `AM in 0..max(MA)-1`.
inline std::string describe(const Operator& op, const Domains& dom) {
    const auto& x = dom.name(op.output);
    return std::visit(
        detail::overloaded{
            [&](const expr::RangeConst& e) {
                return x + " in " + std::to_string(e.lo) + ".." + std::to_string(e.hi);
            },
            [&](const expr::MinPlus& e) {
                return x + " in min(" + dom.name(e.y) + ")" + detail::offset_text(e.k) + "..infinity";
            },
            [&](const expr::MaxMinus& e) {
                std::string lo = dom.values(op.output).front() >= 0 ? "0" : "-infinity";
                return x + " in " + lo + "..max(" + dom.name(e.y) + ")" + detail::offset_text(-e.k);
            },
            [&](const expr::NotConst& e) { return x + " in -{" + std::to_string(e.k) + "}"; },
            [&](const expr::NotVal& e) {
                return x + " in -{val(" + dom.name(e.y) + ")" + detail::offset_text(e.k) + "}";
            },
            [&](const expr::Supports& e) { return x + " in supports(" + dom.name(e.y) + ")"; },
        },
        op.expr);
}

/// The arc-consistency operators implementing `c`, numbered from `first_id`.
inline std::vector<Operator> compile_constraint(const Constraint& c, const Domains& dom,
                                                std::uint32_t first_id = 0, std::size_t constraint_index = 0) {
    std::vector<Operator> ops;
    auto emit = [&](VarId out, IndexicalExpr e) {
        auto deps = detail::deps_of(e);
        ops.push_back({first_id + static_cast<std::uint32_t>(ops.size()), out, std::move(deps), std::move(e),
                       c.label, constraint_index});
    };
    auto binary = [&] {
        if (c.scope.size() != 2) throw Error("constraint '" + c.label + "' needs two variables");
        return std::pair{c.scope[0], c.scope[1]};
    };
    const int k = c.offset;
    switch (c.relation) {
    case Relation::Gt: {
        auto [x, y] = binary();
        emit(x, expr::MinPlus{y, k + 1});
        emit(y, expr::MaxMinus{x, k + 1});
        break;
    }
    case Relation::Ge: {
        auto [x, y] = binary();
        emit(x, expr::MinPlus{y, k});
        emit(y, expr::MaxMinus{x, k});
        break;
    }
    case Relation::Lt: {
        auto [x, y] = binary();
        emit(x, expr::MaxMinus{y, 1 - k});
        emit(y, expr::MinPlus{x, 1 - k});
        break;
    }
    case Relation::Le: {
        auto [x, y] = binary();
        emit(x, expr::MaxMinus{y, -k});
        emit(y, expr::MinPlus{x, -k});
        break;
    }
    case Relation::Eq: {
        auto [x, y] = binary();
        emit(x, expr::MinPlus{y, k});
        emit(x, expr::MaxMinus{y, -k});
        emit(y, expr::MaxMinus{x, k});
        emit(y, expr::MinPlus{x, -k});
        break;
    }
    case Relation::Neq: {
        auto [x, y] = binary();
        emit(x, expr::NotVal{y, k});
        emit(y, expr::NotVal{x, -k});
        break;
    }
    case Relation::NeqConst:
        if (c.scope.size() != 1) throw Error("constraint '" + c.label + "' needs one variable");
        emit(c.scope[0], expr::NotConst{k});
        break;
    case Relation::Table:
        if (c.scope.size() == 1) {
            auto x = c.scope[0];
            for (int v : dom.values(x)) {
                bool allowed = std::any_of(c.tuples.begin(), c.tuples.end(), [&](const auto& t) { return t[0] == v; });
                if (!allowed) emit(x, expr::NotConst{v});
            }
        } else if (c.scope.size() == 2) {
            auto [x, y] = binary();
            std::vector<ValueSet> x_allowed(dom.size(x), ValueSet(dom.size(y)));
            std::vector<ValueSet> y_allowed(dom.size(y), ValueSet(dom.size(x)));
            for (const auto& t : c.tuples) {
                auto px = dom.position(x, t[0]);
                auto py = dom.position(y, t[1]);
                if (!px || !py) continue;
                x_allowed[*px].set(*py);
                y_allowed[*py].set(*px);
            }
            emit(x, expr::Supports{y, std::move(x_allowed)});
            emit(y, expr::Supports{x, std::move(y_allowed)});
        } else {
            throw Error("constraint '" + c.label + "': tables of arity " + std::to_string(c.scope.size()) +
                        " are not supported by the operator compiler");
        }
        break;
    }
    return ops;
}

/// Whether every tuple satisfying all of `constraints` is op-consistent (t ⊆ r(t)).
///
/// Only the variables mentioned by the operator or the constraints are
/// enumerated; the others cannot influence either side.
inline bool verify_preservation(const Operator& op, std::span<const Constraint> constraints, const DomainsPtr& domains,
                                std::uint64_t cap = default_enumeration_cap) {
    const auto& dom = *domains;
    std::vector<VarId> vars{op.output};
    vars.insert(vars.end(), op.deps.begin(), op.deps.end());
    for (const auto& c : constraints) vars.insert(vars.end(), c.scope.begin(), c.scope.end());
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());

    Domains sub;
    std::vector<std::size_t> local(dom.var_count(), 0);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        local[vars[i].index] = i;
        auto vals = dom.values(vars[i]);
        sub.add(dom.name(vars[i]), {vals.begin(), vals.end()});
    }

    auto t = Environment::full(domains);
    std::vector<int> vals;
    bool preserved = true;
    for_each_assignment(sub, cap, [&](const std::vector<std::size_t>& pos) {
        if (!preserved) return;
        for (const auto& c : constraints) {
            vals.clear();
            for (auto v : c.scope) vals.push_back(dom.values(v)[pos[local[v.index]]]);
            if (!c.accepts(vals)) return;
        }
        for (std::size_t i = 0; i < vars.size(); ++i) {
            auto& s = t.of(vars[i]);
            s = ValueSet(s.size());
            s.set(pos[i]);
        }
        if (!kept_values(op, t).test(pos[local[op.output.index]])) preserved = false;
    });
    return preserved;
}

} // namespace fdx

#endif // FDEXPLAIN_INDEXICAL_HPP
