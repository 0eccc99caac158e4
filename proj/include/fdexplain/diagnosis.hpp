#ifndef FDEXPLAIN_DIAGNOSIS_HPP
#define FDEXPLAIN_DIAGNOSIS_HPP

// Missing-answer diagnosis: locate an erroneous rule by asking an oracle
// about nodes of a computed explanation until a minimal symptom is found.

#include "core.hpp"
#include "indexical.hpp"
#include "propagation.hpp"

#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace fdx {

enum class Membership { Expected, NotExpected, Unknown };

/// Three-valued view of the expected environment. A pair starts Unknown and
/// may be fixed once.
class ExpectedEnv {
public:
    explicit ExpectedEnv(DomainsPtr domains)
        : domains_(std::move(domains)), status_(domains_->pair_count(), Membership::Unknown) {}

    static ExpectedEnv from(const Environment& d) {
        ExpectedEnv e(d.domains_ptr());
        for (std::size_t i = 0; i < e.status_.size(); ++i)
            e.status_[i] = d.contains(e.domains_->pair_at(i)) ? Membership::Expected : Membership::NotExpected;
        return e;
    }

    Membership status(ValuePair p) const { return status_.at(domains_->pair_index(p)); }

    void set(ValuePair p, Membership m) {
        auto& s = status_.at(domains_->pair_index(p));
        if (s == m) return;
        if (s != Membership::Unknown)
            throw Error("expected status of " + domains_->format(p) + " is already fixed");
        s = m;
    }

    bool definite() const {
        return std::none_of(status_.begin(), status_.end(), [](auto s) { return s == Membership::Unknown; });
    }

    Environment expected() const {
        auto d = Environment::empty(domains_);
        for (std::size_t i = 0; i < status_.size(); ++i)
            if (status_[i] == Membership::Expected) d.insert(domains_->pair_at(i));
        return d;
    }

private:
    DomainsPtr domains_;
    std::vector<Membership> status_;
};

/// Expected pairs missing from the closure.
inline std::vector<ValuePair> find_symptoms(const Closure& cl, const Environment& expected) {
    return (expected - cl.final_env).pairs();
}
inline std::vector<ValuePair> find_symptoms(const Closure& cl, const ExpectedEnv& expected) {
    return find_symptoms(cl, expected.expected());
}

/// Operators r with d ⊄ r(d).
inline std::vector<std::uint32_t> erroneous_operators(const Program& prog, const Environment& d) {
    std::vector<std::uint32_t> out;
    for (const auto& op : prog.operators())
        if (!d.of(op.output).is_subset_of(kept_values(op, d))) out.push_back(op.id);
    return out;
}

/// h ∈ d and B ∩ d = ∅.
inline bool verify_erroneous(const DeductionRule& rule, const Environment& d) {
    if (!d.contains(rule.head)) return false;
    return std::none_of(rule.body.begin(), rule.body.end(), [&](auto b) { return d.contains(b); });
}

enum class Strategy { DivideAndConquer, TopDown };
enum class Answer { Yes, No, Unknown };
enum class NodeStatus { Untested, Symptom, NotSymptom, Unknown };

inline const char* to_string(Strategy s) { return s == Strategy::TopDown ? "topdown" : "dac"; }
inline const char* to_string(Answer a) {
    switch (a) {
    case Answer::Yes: return "YES";
    case Answer::No: return "NO";
    case Answer::Unknown: return "UNKNOWN";
    }
    return "?";
}
inline const char* to_string(NodeStatus s) {
    switch (s) {
    case NodeStatus::Untested: return "untested";
    case NodeStatus::Symptom: return "symptom";
    case NodeStatus::NotSymptom: return "not-symptom";
    case NodeStatus::Unknown: return "unknown";
    }
    return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
    if (s == "dac" || s == "divide-and-conquer") return Strategy::DivideAndConquer;
    if (s == "topdown" || s == "top-down") return Strategy::TopDown;
    return std::nullopt;
}

/// Accepts yes/no/unknown in any case, plus y/n/?.
inline std::optional<Answer> parse_answer(std::string_view s) {
    std::string t;
    for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "yes" || t == "y") return Answer::Yes;
    if (t == "no" || t == "n") return Answer::No;
    if (t == "unknown" || t == "?" || t == "u") return Answer::Unknown;
    return std::nullopt;
}

/// A candidate erroneous rule: the symptom it removes and its rule.
struct Culprit {
    ValuePair symptom;
    RulePtr rule;

    std::optional<std::uint32_t> operator_id() const {
        return rule ? std::optional{rule->operator_id} : std::nullopt;
    }
    std::string constraint_label() const { return rule ? rule->constraint_label : std::string{}; }
};

struct Diagnosis {
    /// True when the answers pin down one minimal symptom.
    bool definite = false;
    /// The minimal symptom first; for an inconclusive session, every rule on
    /// the unresolved frontier.
    std::vector<Culprit> culprits;
    std::size_t questions = 0;

    const Culprit& primary() const { return culprits.front(); }
};

class DiagnosisSession {
public:
    struct Node {
        ValuePair pair;
        RulePtr rule;
        std::uint64_t seq = 0;
        std::size_t parent = npos;
        std::vector<std::size_t> children;
        std::size_t end = 0; // one past the last preorder index of the subtree
    };
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    /// The root of `tree` must be a confirmed symptom.
    DiagnosisSession(const ExplanationTree& tree, Strategy strategy) : strategy_(strategy) {
        flatten(tree, npos);
        status_.assign(nodes_.size(), NodeStatus::Untested);
        status_[0] = NodeStatus::Symptom;
        advance();
    }

    Strategy strategy() const { return strategy_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    NodeStatus status(std::size_t node) const { return status_.at(node); }
    std::size_t candidate() const { return candidate_; }
    const std::vector<std::pair<ValuePair, Answer>>& transcript() const { return transcript_; }

    bool done() const { return !pending_; }
    std::optional<std::size_t> pending_node() const { return pending_; }

    ValuePair next_question() const {
        if (!pending_) throw Error("diagnosis session is finished");
        return nodes_[*pending_].pair;
    }

    void answer(ValuePair node, Answer a) {
        if (!pending_) throw Error("diagnosis session is finished");
        if (nodes_[*pending_].pair != node) throw Error("answer does not match the pending question");
        auto asked = *pending_;
        transcript_.emplace_back(node, a);
        for (auto i : occurrences_.at(node)) {
            switch (a) {
            case Answer::Yes:
                if (status_[i] != NodeStatus::NotSymptom) status_[i] = NodeStatus::Symptom;
                break;
            case Answer::No:
                for (auto j = i; j < nodes_[i].end; ++j)
                    if (status_[j] != NodeStatus::Symptom) status_[j] = NodeStatus::NotSymptom;
                break;
            case Answer::Unknown:
                if (status_[i] == NodeStatus::Untested) status_[i] = NodeStatus::Unknown;
                break;
            }
        }
        if (a == Answer::Yes) candidate_ = asked;
        advance();
    }

    Diagnosis result() const {
        if (pending_) throw Error("diagnosis session is not finished");
        Diagnosis d;
        d.questions = transcript_.size();
        const auto& root = nodes_[candidate_];
        d.definite = std::all_of(root.children.begin(), root.children.end(),
                                 [&](auto c) { return status_[c] == NodeStatus::NotSymptom; });
        d.culprits.push_back({root.pair, root.rule});
        if (!d.definite) {
            for (auto i = candidate_ + 1; i < root.end; ++i) {
                if (status_[i] != NodeStatus::Unknown) continue;
                bool seen = std::any_of(d.culprits.begin(), d.culprits.end(),
                                        [&](const auto& c) { return c.symptom == nodes_[i].pair; });
                if (!seen) d.culprits.push_back({nodes_[i].pair, nodes_[i].rule});
            }
        }
        return d;
    }

private:
    void flatten(const ExplanationTree& t, std::size_t parent) {
        auto idx = nodes_.size();
        nodes_.push_back({t.root, t.rule, t.seq, parent, {}, 0});
        occurrences_[t.root].push_back(idx);
        if (parent != npos) nodes_[parent].children.push_back(idx);
        for (const auto& c : t.children) flatten(c, idx);
        nodes_[idx].end = nodes_.size();
    }

    void advance() {
        // A duplicate of a confirmed symptom inside the candidate narrows it further.
        for (bool moved = true; moved;) {
            moved = false;
            for (auto i = candidate_ + 1; i < nodes_[candidate_].end; ++i) {
                if (status_[i] == NodeStatus::Symptom) {
                    candidate_ = i;
                    moved = true;
                    break;
                }
            }
        }
        pending_ = strategy_ == Strategy::TopDown ? select_top_down() : select_divide_and_conquer();
    }

    std::optional<std::size_t> select_top_down() const {
        const auto end = nodes_[candidate_].end;
        for (auto i = candidate_ + 1; i < end;) {
            switch (status_[i]) {
            case NodeStatus::Untested: return i;
            case NodeStatus::Unknown: ++i; break; // look through to its children
            default: i = nodes_[i].end; break;
            }
        }
        return std::nullopt;
    }

    // Picks the node whose untested subtree weight is closest to half of the
    // remaining nodes (candidate root included), preferring lighter subtrees
    // and then earlier removals.
    std::optional<std::size_t> select_divide_and_conquer() const {
        const auto begin = candidate_;
        const auto end = nodes_[candidate_].end;
        std::vector<std::size_t> weight(end - begin, 0);
        for (auto i = end; i-- > begin;) {
            auto& w = weight[i - begin];
            if (status_[i] == NodeStatus::Untested) ++w;
            for (auto c : nodes_[i].children) w += weight[c - begin];
        }
        const auto remaining = 1 + weight[0];
        std::optional<std::size_t> best;
        auto key = [&](std::size_t i) {
            auto w = weight[i - begin];
            auto twice = 2 * w;
            auto gap = twice > remaining ? twice - remaining : remaining - twice;
            return std::tuple{gap, w, nodes_[i].seq, i};
        };
        for (auto i = begin + 1; i < end; ++i) {
            if (status_[i] != NodeStatus::Untested) continue;
            if (!best || key(i) < key(*best)) best = i;
        }
        return best;
    }

    Strategy strategy_;
    std::vector<Node> nodes_;
    std::vector<NodeStatus> status_;
    std::map<ValuePair, std::vector<std::size_t>> occurrences_;
    std::size_t candidate_ = 0;
    std::optional<std::size_t> pending_;
    std::vector<std::pair<ValuePair, Answer>> transcript_;
};

inline DiagnosisSession new_session(const ExplanationTree& tree, Strategy strategy) {
    return DiagnosisSession(tree, strategy);
}

/// Opens a session on the computed explanation of `symptom`; fails if the
/// pair was kept by propagation or is known not to be expected.
inline DiagnosisSession new_session(const Closure& cl, ValuePair symptom, Strategy strategy,
                                    const ExpectedEnv* expected = nullptr) {
    const auto& dom = cl.final_env.domains();
    auto tree = explanation_for(cl, symptom);
    if (!tree) throw Error(dom.format(symptom) + " is not a symptom: it was kept by propagation");
    if (expected && expected->status(symptom) == Membership::NotExpected)
        throw Error(dom.format(symptom) + " is not a symptom: it is not expected");
    return DiagnosisSession(*tree, strategy);
}

using Oracle = std::function<Answer(ValuePair)>;

/// Answers YES exactly for the pairs of `d`.
inline Oracle scripted_oracle(Environment d) {
    return [d = std::move(d)](ValuePair p) { return d.contains(p) ? Answer::Yes : Answer::No; };
}

inline Diagnosis run_session(DiagnosisSession& s, const Oracle& oracle) {
    while (!s.done()) {
        auto q = s.next_question();
        s.answer(q, oracle(q));
    }
    return s.result();
}

} // namespace fdx

#endif // FDEXPLAIN_DIAGNOSIS_HPP
