#ifndef FDEXPLAIN_PROPAGATION_HPP
#define FDEXPLAIN_PROPAGATION_HPP

// Chaotic iteration to the downward closure, recording one deduction rule per
// removed pair. The recorded rules form a forest over removal events; any
// removed pair's explanation is materialized from it on demand.

#include "core.hpp"
#include "indexical.hpp"

#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fdx {

using RulePtr = std::shared_ptr<const DeductionRule>;

/// A set of operators with their rule sets and the wake-up index.
class Program {
public:
    Program(DomainsPtr domains, std::vector<Operator> ops) : domains_(std::move(domains)), ops_(std::move(ops)) {
        wake_.resize(domains_->var_count());
        rules_.resize(ops_.size());
        by_head_.resize(ops_.size());
        for (std::uint32_t i = 0; i < ops_.size(); ++i) {
            auto& op = ops_[i];
            op.id = i;
            for (auto y : op.deps) {
                auto& w = wake_.at(y.index);
                if (w.empty() || w.back() != i) w.push_back(i);
            }
            by_head_[i].assign(domains_->size(op.output), -1);
            for (auto& r : rules_for(op, *domains_)) {
                by_head_[i][*domains_->position(op.output, r.head.value)] = static_cast<int>(rules_[i].size());
                rules_[i].push_back(std::make_shared<const DeductionRule>(std::move(r)));
            }
        }
    }

    static std::shared_ptr<const Program> compile(const Csp& csp) {
        std::vector<Operator> ops;
        for (std::size_t c = 0; c < csp.constraints().size(); ++c) {
            auto more = compile_constraint(csp.constraints()[c], csp.domains(), static_cast<std::uint32_t>(ops.size()), c);
            ops.insert(ops.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
        }
        return std::make_shared<const Program>(csp.domains_ptr(), std::move(ops));
    }

    const DomainsPtr& domains_ptr() const { return domains_; }
    const Domains& domains() const { return *domains_; }
    const std::vector<Operator>& operators() const { return ops_; }
    const Operator& op(std::uint32_t id) const { return ops_.at(id); }
    /// Operators that must be re-run when `v` loses a value.
    const std::vector<std::uint32_t>& woken_by(VarId v) const { return wake_.at(v.index); }
    const std::vector<RulePtr>& rules(std::uint32_t op_id) const { return rules_.at(op_id); }

    /// The rule of `op_id` with head `head`, if the operator can ever remove it.
    RulePtr rule_for_head(std::uint32_t op_id, ValuePair head) const {
        auto pos = domains_->position(head.var, head.value);
        if (!pos || head.var != ops_.at(op_id).output) return nullptr;
        int r = by_head_[op_id][*pos];
        return r < 0 ? nullptr : rules_[op_id][static_cast<std::size_t>(r)];
    }

    /// ℛ, the union of all operators' rule sets.
    std::vector<DeductionRule> all_rules() const {
        std::vector<DeductionRule> out;
        for (const auto& rs : rules_)
            for (const auto& r : rs) out.push_back(*r);
        return out;
    }

private:
    DomainsPtr domains_;
    std::vector<Operator> ops_;
    std::vector<std::vector<std::uint32_t>> wake_;
    std::vector<std::vector<RulePtr>> rules_;
    std::vector<std::vector<int>> by_head_;
};

using ProgramPtr = std::shared_ptr<const Program>;

/// One recorded justification per removed pair.
class ExplanationStore {
public:
    struct Entry {
        RulePtr rule;
        std::uint64_t seq = 0;
    };

    ExplanationStore() = default;
    explicit ExplanationStore(DomainsPtr domains) : domains_(std::move(domains)), entries_(domains_->pair_count()) {}

    /// First justification wins; returns false if `head` was already recorded.
    bool record(RulePtr rule, std::uint64_t seq) {
        auto& e = entries_.at(domains_->pair_index(rule->head));
        if (e.rule) return false;
        e = {std::move(rule), seq};
        order_.push_back(domains_->pair_index(e.rule->head));
        return true;
    }

    const Entry* find(ValuePair p) const {
        const auto& e = entries_.at(domains_->pair_index(p));
        return e.rule ? &e : nullptr;
    }
    bool contains(ValuePair p) const { return find(p) != nullptr; }
    std::size_t size() const { return order_.size(); }
    bool empty() const { return order_.empty(); }

    /// Recorded pairs in removal order.
    std::vector<ValuePair> keys() const {
        std::vector<ValuePair> out;
        out.reserve(order_.size());
        for (auto i : order_) out.push_back(domains_->pair_at(i));
        return out;
    }

private:
    DomainsPtr domains_;
    std::vector<Entry> entries_;
    std::vector<std::size_t> order_;
};

struct Step {
    std::uint32_t operator_id = 0;
    std::vector<ValuePair> removed;
};

struct Closure {
    ProgramPtr program;
    Environment start;
    Environment final_env;
    ExplanationStore store;
    std::vector<Step> steps;
    /// Seed of the shuffled schedule, if one was used.
    std::optional<std::uint64_t> seed;
};

struct ScheduleOptions {
    /// Without a seed operators run in FIFO order starting from declaration
    /// order. With one, the initial order is shuffled and each step picks a
    /// pending operator at random.
    std::optional<std::uint64_t> seed;
    /// Keep steps that removed nothing in the log.
    bool log_idle_steps = false;
};

inline Closure chaotic_iteration(ProgramPtr prog, Environment d0, ScheduleOptions opts = {}) {
    const auto& dom = prog->domains();
    const auto n_ops = prog->operators().size();
    Closure cl{prog, d0, d0, ExplanationStore(prog->domains_ptr()), {}, opts.seed};
    auto& d = cl.final_env;

    std::vector<char> pending(n_ops, 1);
    std::vector<std::uint32_t> queue(n_ops);
    for (std::uint32_t i = 0; i < n_ops; ++i) queue[i] = i;
    std::size_t head = 0;
    std::optional<std::mt19937_64> rng;
    if (opts.seed) {
        rng.emplace(*opts.seed);
        std::shuffle(queue.begin(), queue.end(), *rng);
    }

    std::uint64_t seq = 0;
    while (head < queue.size()) {
        std::uint32_t id;
        if (rng) {
            std::uniform_int_distribution<std::size_t> pick(head, queue.size() - 1);
            std::swap(queue[head], queue[pick(*rng)]);
        }
        id = queue[head++];
        if (head > 4096 && head * 2 > queue.size()) {
            queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(head));
            head = 0;
        }
        pending[id] = 0;

        const auto& op = prog->op(id);
        auto removed = d.of(op.output);
        removed.subtract(kept_values(op, d));
        if (removed.empty()) {
            if (opts.log_idle_steps) cl.steps.push_back({id, {}});
            continue;
        }
        Step step{id, {}};
        auto vals = dom.values(op.output);
        removed.for_each([&](std::size_t pos) {
            ValuePair h{op.output, vals[pos]};
            auto rule = prog->rule_for_head(id, h);
            if (!rule) throw Error("operator " + std::to_string(id) + " removed " + dom.format(h) + " without a rule");
            cl.store.record(std::move(rule), ++seq);
            step.removed.push_back(h);
        });
        d.of(op.output).subtract(removed);
        cl.steps.push_back(std::move(step));
        for (auto w : prog->woken_by(op.output)) {
            if (pending[w]) continue;
            pending[w] = 1;
            queue.push_back(w);
        }
    }
    return cl;
}

inline Closure chaotic_iteration(ProgramPtr prog, ScheduleOptions opts = {}) {
    auto d0 = Environment::full(prog->domains_ptr());
    return chaotic_iteration(std::move(prog), std::move(d0), opts);
}

/// A proof tree for a removed pair. Nodes whose pair was already absent from
/// the starting environment carry no rule; nodes cut by the materialization
/// cap are marked `truncated`.
struct ExplanationTree {
    ValuePair root;
    RulePtr rule;
    std::uint64_t seq = 0;
    bool truncated = false;
    std::vector<ExplanationTree> children;

    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& c : children) n += c.size();
        return n;
    }
    bool any_truncated() const {
        if (truncated) return true;
        return std::any_of(children.begin(), children.end(), [](const auto& c) { return c.any_truncated(); });
    }
};

inline constexpr std::size_t default_node_cap = 1'000'000;

namespace detail {

inline ExplanationTree materialize(const Closure& cl, ValuePair p, std::size_t& budget) {
    ExplanationTree t{p, nullptr, 0, false, {}};
    if (budget == 0) {
        t.truncated = true;
        return t;
    }
    --budget;
    const auto* e = cl.store.find(p);
    if (!e) return t;
    t.rule = e->rule;
    t.seq = e->seq;
    t.children.reserve(e->rule->body.size());
    for (auto b : e->rule->body) t.children.push_back(materialize(cl, b, budget));
    return t;
}

} // namespace detail

/// The computed explanation of `p`, or nothing if `p` survived propagation.
inline std::optional<ExplanationTree> explanation_for(const Closure& cl, ValuePair p,
                                                      std::size_t node_cap = default_node_cap) {
    if (!cl.final_env.domains().contains(p))
        throw Error("explanation_for: " + cl.final_env.domains().format(p) + " is not a pair of the model");
    if (cl.final_env.contains(p)) return std::nullopt;
    std::size_t budget = node_cap;
    return detail::materialize(cl, p, budget);
}

/// Pairs removed during the iteration (the roots of computed explanations).
inline Environment removed_roots(const Closure& cl) {
    auto out = Environment::empty(cl.final_env.domains_ptr());
    for (auto p : cl.store.keys()) out.insert(p);
    return out;
}

/// Least superset of `seed` closed under `rules` (h is added once its body is).
inline Environment upward_closure(std::span<const DeductionRule> rules, const Environment& seed) {
    const auto& dom = seed.domains();
    auto closed = seed;
    std::vector<std::size_t> missing(rules.size(), 0);
    std::vector<std::vector<std::size_t>> watchers(dom.pair_count());
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        for (auto b : rules[i].body) {
            if (!closed.contains(b)) {
                ++missing[i];
                watchers[dom.pair_index(b)].push_back(i);
            }
        }
        if (missing[i] == 0) ready.push_back(i);
    }
    while (!ready.empty()) {
        auto h = rules[ready.back()].head;
        ready.pop_back();
        if (closed.contains(h)) continue;
        closed.insert(h);
        for (auto w : watchers[dom.pair_index(h)])
            if (--missing[w] == 0) ready.push_back(w);
    }
    return closed;
}

inline Environment upward_closure(const Program& prog, const Environment& seed) {
    auto rules = prog.all_rules();
    return upward_closure(rules, seed);
}

/// Whether `d` is r-consistent for every operator of `prog`.
inline bool is_consistent(const Program& prog, const Environment& d) {
    return std::all_of(prog.operators().begin(), prog.operators().end(),
                       [&](const auto& op) { return d.of(op.output).is_subset_of(kept_values(op, d)); });
}

} // namespace fdx

#endif // FDEXPLAIN_PROPAGATION_HPP
