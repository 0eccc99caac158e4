#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace fdx;
using fdx::test::env;

namespace {

struct Buggy {
    Csp csp = test::conference(true);
    ProgramPtr prog = Program::compile(csp);
    Closure cl = chaotic_iteration(prog);
    Environment expected = test::conference_expected(csp);
    ExplanationTree tree = *explanation_for(cl, {csp.var("AM"), 1});
    ValuePair p(const char* name, int v) const { return {csp.var(name), v}; }
};

ExplanationTree chain(const Csp& csp, int length) {
    // (X,length) <- (X,length-1) <- ... <- (X,1) <- {}
    auto x = csp.var("X");
    ExplanationTree t{{x, 1}, std::make_shared<const DeductionRule>(DeductionRule{{x, 1}, {}, 0, "c1"}), 1, false, {}};
    for (int v = 2; v <= length; ++v) {
        auto rule = std::make_shared<const DeductionRule>(DeductionRule{{x, v}, {{x, v - 1}}, 0, "c" + std::to_string(v)});
        ExplanationTree parent{{x, v}, rule, static_cast<std::uint64_t>(v), false, {}};
        parent.children.push_back(std::move(t));
        t = std::move(parent);
    }
    return t;
}

} // namespace

TEST_CASE("find_symptoms", "[diagnosis]") {
    Buggy b;
    auto symptoms = find_symptoms(b.cl, b.expected);
    CHECK(std::find(symptoms.begin(), symptoms.end(), b.p("AM", 1)) != symptoms.end());
    CHECK(symptoms.size() == 6);
    CHECK(find_symptoms(b.cl, ExpectedEnv::from(b.expected)) == symptoms);

    auto good = test::conference();
    auto cl = chaotic_iteration(Program::compile(good));
    CHECK(find_symptoms(cl, test::conference_expected(good)).empty());
    CHECK(find_symptoms(b.cl, b.csp.none()).empty());
}

TEST_CASE("erroneous_operators", "[diagnosis]") {
    Buggy b;
    auto bad = erroneous_operators(*b.prog, b.expected);
    bool has_pm = std::any_of(bad.begin(), bad.end(), [&](auto id) {
        return describe(b.prog->op(id), b.csp.domains()) == "PM in min(MP)+1..infinity";
    });
    CHECK(has_pm);
    for (auto id : bad) CHECK(b.prog->op(id).constraint_label == "PM>MP");

    auto good = test::conference();
    auto sols = enumerate_solutions(good);
    CHECK(erroneous_operators(*Program::compile(good), union_solutions(sols, good.domains_ptr())).empty());
    CHECK(erroneous_operators(*b.prog, b.csp.none()).empty());
}

TEST_CASE("divide-and-conquer session on the buggy conference model", "[diagnosis]") {
    Buggy b;
    auto s = new_session(b.tree, Strategy::DivideAndConquer);
    REQUIRE_FALSE(s.done());
    CHECK(s.next_question() == b.p("MA", 3));
    s.answer(b.p("MA", 3), Answer::Yes);
    CHECK(s.nodes()[s.candidate()].pair == b.p("MA", 3));
    CHECK(s.next_question() == b.p("PM", 2));
    s.answer(b.p("PM", 2), Answer::Yes);
    CHECK(s.next_question() == b.p("MP", 1));
    s.answer(b.p("MP", 1), Answer::No);
    REQUIRE(s.done());
    CHECK_THROWS_AS(s.next_question(), Error);
    CHECK_THROWS_AS(s.answer(b.p("MP", 1), Answer::No), Error);

    auto d = s.result();
    CHECK(d.definite);
    CHECK(d.questions == 3);
    CHECK(d.primary().symptom == b.p("PM", 2));
    REQUIRE(d.primary().rule);
    CHECK(*d.primary().rule == DeductionRule{b.p("PM", 2), {b.p("MP", 1)}, *d.primary().operator_id(), "PM>MP"});
    CHECK(describe(b.prog->op(*d.primary().operator_id()), b.csp.domains()) == "PM in min(MP)+1..infinity");
    CHECK(d.primary().constraint_label() == "PM>MP");
    CHECK(verify_erroneous(*d.primary().rule, b.expected));
}

TEST_CASE("scripted oracle drives the same session", "[diagnosis]") {
    Buggy b;
    auto s = new_session(b.cl, b.p("AM", 1), Strategy::DivideAndConquer);
    auto d = run_session(s, scripted_oracle(b.expected));
    CHECK(d.primary().symptom == b.p("PM", 2));
    CHECK(s.transcript().size() == 3);
}

TEST_CASE("top-down session", "[diagnosis]") {
    Buggy b;
    auto s = new_session(b.tree, Strategy::TopDown);
    CHECK(s.nodes()[0].children.size() == 3);
    CHECK(s.next_question() == b.p("MA", 2));
    auto d = run_session(s, scripted_oracle(b.expected));
    CHECK(d.definite);
    CHECK(verify_erroneous(*d.primary().rule, b.expected));
    CHECK(d.primary().constraint_label() == "PM>MP");
}

TEST_CASE("single-node explanation needs no question", "[diagnosis]") {
    Buggy b;
    auto leaf = explanation_for(b.cl, b.p("MA", 4));
    REQUIRE(leaf);
    REQUIRE(leaf->children.empty());
    auto s = new_session(*leaf, Strategy::DivideAndConquer);
    CHECK(s.done());
    auto d = s.result();
    CHECK(d.definite);
    CHECK(d.questions == 0);
    CHECK(d.primary().symptom == b.p("MA", 4));
    CHECK(d.primary().constraint_label() == "MA!=4");
}

TEST_CASE("sessions refuse kept pairs and unexpected roots", "[diagnosis]") {
    auto good = test::conference();
    auto cl = chaotic_iteration(Program::compile(good));
    CHECK_THROWS_WITH(new_session(cl, {good.var("AM"), 1}, Strategy::DivideAndConquer),
                      Catch::Matchers::ContainsSubstring("not a symptom"));
    Buggy b;
    auto expected = ExpectedEnv::from(b.expected);
    CHECK_THROWS_AS(new_session(b.cl, b.p("AM", 4), Strategy::DivideAndConquer, &expected), Error);
    CHECK_NOTHROW(new_session(b.cl, b.p("AM", 1), Strategy::DivideAndConquer, &expected));
}

TEST_CASE("stale and early calls are errors", "[diagnosis]") {
    Buggy b;
    auto s = new_session(b.tree, Strategy::DivideAndConquer);
    CHECK_THROWS_AS(s.result(), Error);
    CHECK_THROWS_AS(s.answer(b.p("PM", 2), Answer::Yes), Error);
}

TEST_CASE("all-UNKNOWN session returns a candidate set", "[diagnosis]") {
    Buggy b;
    auto s = new_session(b.tree, Strategy::DivideAndConquer);
    std::size_t asked = 0;
    while (!s.done()) {
        s.answer(s.next_question(), Answer::Unknown);
        ++asked;
    }
    CHECK(asked == 6); // seven non-root nodes, (PM,1) twice
    auto d = s.result();
    CHECK_FALSE(d.definite);
    REQUIRE_FALSE(d.culprits.empty());
    bool has_pm = std::any_of(d.culprits.begin(), d.culprits.end(), [&](const auto& c) {
        return c.symptom == b.p("PM", 2) && c.constraint_label() == "PM>MP";
    });
    CHECK(has_pm);
}

TEST_CASE("duplicate labels share one answer", "[diagnosis]") {
    Buggy b;
    auto s = new_session(b.tree, Strategy::TopDown);
    // (MA,2) then its child (PM,1); answering (PM,1) settles both occurrences.
    s.answer(b.p("MA", 2), Answer::Unknown);
    CHECK(s.next_question() == b.p("PM", 1));
    s.answer(b.p("PM", 1), Answer::No);
    std::size_t settled = 0;
    for (std::size_t i = 0; i < s.nodes().size(); ++i)
        if (s.nodes()[i].pair == b.p("PM", 1)) settled += s.status(i) == NodeStatus::NotSymptom;
    CHECK(settled == 2);
    CHECK(s.next_question() == b.p("MA", 3));
}

TEST_CASE("chain of seven nodes needs at most three questions", "[diagnosis]") {
    Csp csp;
    csp.add_variable("X", 1, 7);
    auto tree = chain(csp, 7);
    REQUIRE(tree.size() == 7);
    for (int minimal = 1; minimal <= 7; ++minimal) {
        // Values minimal..7 are symptoms, below is justified.
        auto expected = csp.none();
        for (int v = minimal; v <= 7; ++v) expected.insert({csp.var("X"), v});
        auto s = new_session(tree, Strategy::DivideAndConquer);
        auto d = run_session(s, scripted_oracle(expected));
        CHECK(d.questions <= 3);
        CHECK(d.primary().symptom.value == minimal);
    }
}

TEST_CASE("verify_erroneous", "[diagnosis]") {
    Buggy b;
    CHECK(verify_erroneous({b.p("PM", 2), {b.p("MP", 1)}, 0, "PM>MP"}, b.expected));
    CHECK_FALSE(verify_erroneous({b.p("AM", 1), {b.p("MA", 2), b.p("MA", 3), b.p("MA", 4)}, 0, ""}, b.expected));
    CHECK_FALSE(verify_erroneous({b.p("PM", 2), {b.p("MP", 1)}, 0, ""}, b.csp.none()));
}

TEST_CASE("scripted_oracle", "[diagnosis]") {
    Buggy b;
    auto oracle = scripted_oracle(b.expected);
    CHECK(oracle(b.p("MA", 3)) == Answer::Yes);
    CHECK(oracle(b.p("MP", 1)) == Answer::No);
    CHECK(scripted_oracle(b.csp.none())(b.p("AM", 1)) == Answer::No);
}

TEST_CASE("expected environment statuses only become definite", "[diagnosis]") {
    Buggy b;
    ExpectedEnv e(b.csp.domains_ptr());
    CHECK(e.status(b.p("AM", 1)) == Membership::Unknown);
    e.set(b.p("AM", 1), Membership::Expected);
    e.set(b.p("AM", 1), Membership::Expected);
    CHECK_THROWS_AS(e.set(b.p("AM", 1), Membership::NotExpected), Error);
    CHECK_FALSE(e.definite());
    CHECK(ExpectedEnv::from(b.expected).definite());
    CHECK(ExpectedEnv::from(b.expected).expected() == b.expected);
}

TEST_CASE("diagnosis properties under injected faults", "[diagnosis][property]") {
    std::mt19937_64 rng(4242);
    int sessions = 0;
    for (int round = 0; round < 300 && sessions < 150; ++round) {
        auto intended = test::random_csp(rng, {5, 6, 6});
        auto sols = enumerate_solutions(intended);
        if (sols.empty()) continue;
        auto d = union_solutions(sols, intended.domains_ptr());
        REQUIRE(is_consistent(*Program::compile(intended), d));

        auto idx = std::uniform_int_distribution<std::size_t>(0, intended.constraints().size() - 1)(rng);
        for (const auto& faulty : test::mutations(intended, idx)) {
            auto prog = Program::compile(faulty);
            auto cl = chaotic_iteration(prog);
            auto symptoms = find_symptoms(cl, d);
            // A symptom implies an erroneous operator.
            if (!symptoms.empty()) REQUIRE_FALSE(erroneous_operators(*prog, d).empty());
            if (symptoms.empty()) continue;

            auto tree = *explanation_for(cl, symptoms.front());
            for (auto strategy : {Strategy::DivideAndConquer, Strategy::TopDown}) {
                auto s = new_session(tree, strategy);
                auto diag = run_session(s, scripted_oracle(d));
                ++sessions;
                REQUIRE(diag.definite);
                REQUIRE(diag.questions <= tree.size());
                REQUIRE(verify_erroneous(*diag.primary().rule, d));

                // Minimality: every child of the returned node was answered NO.
                const auto& node = s.nodes()[s.candidate()];
                for (auto c : node.children) REQUIRE(s.status(c) == NodeStatus::NotSymptom);
                for (auto c : node.children) REQUIRE_FALSE(d.contains(s.nodes()[c].pair));

                // Each distinct pair is asked at most once.
                std::set<ValuePair> asked;
                for (const auto& [p, a] : s.transcript()) REQUIRE(asked.insert(p).second);
            }
        }
    }
    CHECK(sessions >= 50);
}
