#ifndef FDEXPLAIN_TESTS_SUPPORT_HPP
#define FDEXPLAIN_TESTS_SUPPORT_HPP

// Shared fixtures: the conference models, random CSP generators and
// brute-force oracles that do not go through the propagation engine.

#include <fdexplain/fdexplain.hpp>

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fdx::test {

inline std::string model_path(const std::string& name) { return std::string(FDX_MODELS_DIR) + "/" + name; }

inline std::string read_model_file(const std::string& name) {
    std::ifstream in(model_path(name));
    if (!in) throw Error("missing test model " + name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Csp load(const std::string& name) { return parse_model(read_model_file(name)); }

/// The conference CSP built through the API, constraints in listing order.
/// `buggy` reverses MP > PM into PM > MP.
inline Csp conference(bool buggy = false) {
    Csp csp;
    auto AM = csp.add_variable("AM", 1, 4);
    auto MA = csp.add_variable("MA", 1, 4);
    auto PM = csp.add_variable("PM", 1, 4);
    auto MP = csp.add_variable("MP", 1, 4);
    csp.add(MA, Relation::Gt, AM);
    csp.add(MA, Relation::Gt, PM);
    csp.add(MP, Relation::Gt, AM);
    if (buggy)
        csp.add(PM, Relation::Gt, MP);
    else
        csp.add(MP, Relation::Gt, PM);
    csp.add_neq_const(MA, 4);
    csp.add_neq_const(MP, 4);
    csp.add_neq_const(AM, 4);
    csp.add_neq_const(PM, 4);
    csp.add(AM, Relation::Neq, PM);
    return csp;
}

inline Environment env(const Csp& csp, std::initializer_list<std::pair<const char*, int>> pairs) {
    auto d = csp.none();
    for (auto [name, v] : pairs) d.insert({csp.var(name), v});
    return d;
}

/// The union of the two intended conference solutions.
inline Environment conference_expected(const Csp& csp) {
    return env(csp, {{"AM", 1}, {"AM", 2}, {"MA", 3}, {"MP", 3}, {"PM", 1}, {"PM", 2}});
}

inline Environment random_environment(const DomainsPtr& dom, std::mt19937_64& rng, double density = 0.5) {
    std::bernoulli_distribution keep(density);
    auto d = Environment::empty(dom);
    for (std::size_t i = 0; i < dom->pair_count(); ++i)
        if (keep(rng)) d.insert(dom->pair_at(i));
    return d;
}

inline std::vector<std::vector<int>> random_table(std::span<const int> dx, std::span<const int> dy, std::mt19937_64& rng,
                                                  double density) {
    std::bernoulli_distribution pick(density);
    std::vector<std::vector<int>> tuples;
    for (int a : dx)
        for (int b : dy)
            if (pick(rng)) tuples.push_back({a, b});
    return tuples;
}

struct RandomCspOptions {
    int max_vars = 5;
    int max_values = 8;
    int max_constraints = 10;
    bool tables_only = false;
};

/// Up to 5 variables over up to 8 values each, up to 10 constraints drawn
/// from the whole relation algebra.
inline Csp random_csp(std::mt19937_64& rng, RandomCspOptions o = {}) {
    auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    Csp csp;
    int n = uni(2, o.max_vars);
    for (int i = 0; i < n; ++i) {
        int size = uni(2, o.max_values);
        if (uni(0, 3) == 0) {
            std::vector<int> vals;
            int v = uni(-1, 2);
            for (int k = 0; k < size; ++k) vals.push_back(v += uni(1, 2));
            csp.add_variable("V" + std::to_string(i), vals);
        } else {
            int lo = uni(0, 3);
            csp.add_variable("V" + std::to_string(i), lo, lo + size - 1);
        }
    }
    int m = uni(1, o.max_constraints);
    for (int c = 0; c < m; ++c) {
        VarId x{static_cast<std::uint32_t>(uni(0, n - 1))};
        VarId y{static_cast<std::uint32_t>(uni(0, n - 2))};
        if (y.index >= x.index) ++y.index;
        int kind = o.tables_only ? 7 : uni(0, 7);
        int k = uni(-2, 2);
        switch (kind) {
        case 0: csp.add(x, Relation::Gt, y, k); break;
        case 1: csp.add(x, Relation::Lt, y, k); break;
        case 2: csp.add(x, Relation::Ge, y, k); break;
        case 3: csp.add(x, Relation::Le, y, k); break;
        case 4: csp.add(x, Relation::Eq, y, k); break;
        case 5: csp.add(x, Relation::Neq, y, k); break;
        case 6: {
            auto vals = csp.domains().values(x);
            csp.add_neq_const(x, vals[static_cast<std::size_t>(uni(0, static_cast<int>(vals.size()) - 1))]);
            break;
        }
        default: {
            auto t = random_table(csp.domains().values(x), csp.domains().values(y), rng, 0.35 + 0.1 * uni(0, 4));
            csp.add_constraint({"", {x, y}, Relation::Table, 0, std::move(t)});
        }
        }
    }
    return csp;
}

/// Naive fixpoint: apply every operator to the whole environment until a
/// full pass changes nothing.
inline Environment naive_fixpoint(const Program& prog, Environment d) {
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& op : prog.operators()) {
            auto kept = kept_values(op, d);
            auto before = d.of(op.output);
            d.of(op.output) &= kept;
            if (!(d.of(op.output) == before)) changed = true;
        }
    }
    return d;
}

/// Arc-consistency fixpoint computed straight from the constraint relations:
/// delete every value lacking a support until nothing changes. Binary
/// constraints and unary != only.
inline Environment brute_force_ac(const Csp& csp) {
    auto d = csp.full();
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& c : csp.constraints()) {
            if (c.scope.size() == 1) {
                for (int a : d.values(c.scope[0])) {
                    int vals[2] = {a, 0};
                    if (!c.accepts(std::span<const int>(vals, 1))) {
                        d.erase({c.scope[0], a});
                        changed = true;
                    }
                }
                continue;
            }
            for (int side = 0; side < 2; ++side) {
                VarId x = c.scope[side], y = c.scope[1 - side];
                for (int a : d.values(x)) {
                    bool supported = false;
                    for (int b : d.values(y)) {
                        int vals[2] = {side == 0 ? a : b, side == 0 ? b : a};
                        if (c.accepts(vals)) {
                            supported = true;
                            break;
                        }
                    }
                    if (!supported) {
                        d.erase({x, a});
                        changed = true;
                    }
                }
            }
        }
    }
    return d;
}

/// Checks that every node's rule belongs to its operator's rule set and that
/// the children are exactly the rule body.
inline bool is_valid_proof_tree(const ExplanationTree& t, const Closure& cl) {
    if (t.truncated) return true;
    if (!t.rule) return !cl.start.contains(t.root) && t.children.empty();
    if (t.rule->head != t.root) return false;
    auto expected = cl.program->rule_for_head(t.rule->operator_id, t.root);
    if (!expected || !(*expected == *t.rule)) return false;
    if (t.children.size() != t.rule->body.size()) return false;
    for (std::size_t i = 0; i < t.children.size(); ++i) {
        if (t.children[i].root != t.rule->body[i]) return false;
        if (!is_valid_proof_tree(t.children[i], cl)) return false;
    }
    return true;
}

/// Single-constraint mutations of `csp`: each result differs from the input
/// in constraint `index` only (relation swapped, offset shifted, operands
/// exchanged or constant changed). Labels are recomputed.
inline std::vector<Csp> mutations(const Csp& csp, std::size_t index) {
    std::vector<Csp> out;
    const auto& orig = csp.constraints().at(index);
    auto variant = [&](Constraint c) {
        c.label.clear();
        Csp m;
        for (std::uint32_t x = 0; x < csp.domains().var_count(); ++x) {
            auto vals = csp.domains().values(VarId{x});
            m.add_variable(csp.domains().name(VarId{x}), {vals.begin(), vals.end()});
        }
        for (std::size_t i = 0; i < csp.constraints().size(); ++i)
            m.add_constraint(i == index ? c : csp.constraints()[i]);
        if (!(m == csp)) out.push_back(std::move(m));
    };
    switch (orig.relation) {
    case Relation::NeqConst:
        for (int d : {-1, 1}) {
            auto c = orig;
            c.offset += d;
            variant(c);
        }
        break;
    case Relation::Table: {
        auto c = orig;
        if (!c.tuples.empty()) {
            c.tuples.pop_back();
            variant(c);
        }
        break;
    }
    default:
        for (auto r : {Relation::Gt, Relation::Lt, Relation::Ge, Relation::Le, Relation::Eq, Relation::Neq}) {
            if (r == orig.relation) continue;
            auto c = orig;
            c.relation = r;
            variant(c);
        }
        for (int d : {-1, 1}) {
            auto c = orig;
            c.offset += d;
            variant(c);
        }
        {
            auto c = orig;
            std::swap(c.scope[0], c.scope[1]);
            variant(c);
        }
    }
    return out;
}

/// Whether every operator of `c` preserves each of `solutions`.
inline bool preserves_all(const Constraint& c, const Domains& dom, std::span<const Tuple> solutions) {
    for (const auto& op : compile_constraint(c, dom))
        for (const auto& t : solutions)
            if (!t.of(op.output).is_subset_of(kept_values(op, t))) return false;
    return true;
}

} // namespace fdx::test

#endif // FDEXPLAIN_TESTS_SUPPORT_HPP
