// fdx: propagate finite-domain models, explain removals, diagnose missing answers.

#include <fdexplain/fdexplain.hpp>
#include <fdexplain/http.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int exit_no_symptom = 1;
constexpr int exit_usage = 2;

struct Failure {
    int code;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure{exit_usage, "cannot read '" + path + "'"};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fdx::Csp load_model(const std::string& path) {
    try {
        return fdx::parse_model(read_file(path));
    } catch (const fdx::Error& e) {
        throw Failure{exit_usage, path + ":" + e.what()};
    }
}

fdx::ScheduleOptions schedule(const std::optional<std::uint64_t>& seed, bool trace = false) {
    return {seed, trace};
}

int solve(const std::string& model_path, bool trace, const std::optional<std::uint64_t>& seed) {
    auto csp = load_model(model_path);
    auto prog = fdx::Program::compile(csp);
    auto cl = fdx::chaotic_iteration(prog, schedule(seed));
    if (trace) {
        const auto& dom = csp.domains();
        for (std::size_t i = 0; i < cl.steps.size(); ++i) {
            const auto& st = cl.steps[i];
            std::cout << "step " << i + 1 << ": " << fdx::describe(prog->op(st.operator_id), dom) << " ["
                      << prog->op(st.operator_id).constraint_label << "] removes";
            for (auto p : st.removed) std::cout << " " << dom.format(p);
            std::cout << "\n";
        }
    }
    std::cout << fdx::render_closure(cl.final_env);
    return 0;
}

int explain(const std::string& model_path, const std::string& value, const std::optional<std::uint64_t>& seed,
            std::size_t cap) {
    auto csp = load_model(model_path);
    fdx::ValuePair p;
    try {
        p = fdx::parse_pair(value, csp.domains());
    } catch (const fdx::Error& e) {
        throw Failure{exit_usage, e.what()};
    }
    auto prog = fdx::Program::compile(csp);
    auto cl = fdx::chaotic_iteration(prog, schedule(seed));
    auto tree = fdx::explanation_for(cl, p, cap);
    if (!tree) {
        std::cout << csp.domains().format(p) << " is kept by propagation; nothing to explain\n";
        return 0;
    }
    std::cout << fdx::export_explanation(*tree, csp.domains(), {fdx::model_hash(csp), seed}, prog.get()).dump(2)
              << "\n";
    return 0;
}

// Reads answers one per line; blank lines and '#' comments are skipped.
class ScriptedAnswers {
public:
    explicit ScriptedAnswers(const std::string& text) {
        std::istringstream in(text);
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            std::istringstream words(line);
            std::string word;
            if (!(words >> word)) continue;
            auto a = fdx::parse_answer(word);
            if (!a) throw Failure{exit_usage, "script line " + std::to_string(line_no) + ": '" + word +
                                                  "' is not YES, NO or UNKNOWN"};
            answers_.push_back(*a);
        }
    }
    std::optional<fdx::Answer> next() {
        if (pos_ == answers_.size()) return std::nullopt;
        return answers_[pos_++];
    }

private:
    std::vector<fdx::Answer> answers_;
    std::size_t pos_ = 0;
};

std::optional<fdx::Answer> ask_terminal(const std::string& question) {
    while (true) {
        std::cout << question << " [yes/no/unknown] " << std::flush;
        std::string line;
        if (!std::getline(std::cin, line)) return std::nullopt;
        std::istringstream words(line);
        std::string word;
        words >> word;
        if (auto a = fdx::parse_answer(word)) return a;
        std::cout << "please answer yes, no or unknown\n";
    }
}

struct DiagnoseOptions {
    std::string model;
    std::string expected;
    std::string script;
    std::string strategy = "dac";
    std::string symptom;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

int diagnose(const DiagnoseOptions& o) {
    auto csp = load_model(o.model);
    const auto& dom = csp.domains();
    fdx::Environment expected;
    try {
        expected = fdx::parse_expected(read_file(o.expected), csp.domains_ptr());
    } catch (const fdx::Error& e) {
        throw Failure{exit_usage, o.expected + ":" + e.what()};
    }
    auto strategy = fdx::parse_strategy(o.strategy);
    if (!strategy) throw Failure{exit_usage, "--strategy must be dac or topdown"};
    std::optional<ScriptedAnswers> script;
    if (!o.script.empty()) script.emplace(read_file(o.script));

    auto prog = fdx::Program::compile(csp);
    auto cl = fdx::chaotic_iteration(prog, schedule(o.seed));
    auto symptoms = fdx::find_symptoms(cl, expected);
    if (symptoms.empty()) {
        std::cout << "no symptom: every expected value is kept by propagation\n";
        return exit_no_symptom;
    }
    fdx::ValuePair symptom = symptoms.front();
    if (!o.symptom.empty()) {
        try {
            symptom = fdx::parse_pair(o.symptom, dom);
        } catch (const fdx::Error& e) {
            throw Failure{exit_usage, e.what()};
        }
        if (std::find(symptoms.begin(), symptoms.end(), symptom) == symptoms.end())
            throw Failure{exit_no_symptom, dom.format(symptom) + " is not a symptom"};
    }
    if (!o.json) std::cout << "symptom: " << dom.format(symptom) << "\n";

    auto session = fdx::new_session(cl, symptom, *strategy);
    while (!session.done()) {
        auto q = session.next_question();
        auto text = fdx::question_text(dom, q);
        std::optional<fdx::Answer> a = script ? script->next() : ask_terminal(text);
        if (!a) throw Failure{exit_usage, script ? "script ran out of answers at: " + text : "no answer on input"};
        if (script && !o.json) std::cout << text << " " << fdx::to_string(*a) << "\n";
        session.answer(q, *a);
    }
    auto d = session.result();
    if (o.json) {
        std::cout << fdx::diagnosis_to_json(d, dom, prog.get()).dump(2) << "\n";
        return 0;
    }
    auto print = [&](const fdx::Culprit& c) {
        std::cout << "erroneous rule: " << (c.rule ? fdx::format_rule(*c.rule, dom) : "(none)") << "\n";
        if (c.rule) {
            std::cout << "operator: " << fdx::describe(prog->op(c.rule->operator_id), dom) << "\n";
            std::cout << "constraint: " << c.rule->constraint_label << "\n";
        }
    };
    if (d.definite) {
        std::cout << "minimal symptom: " << dom.format(d.primary().symptom) << "\n";
        print(d.primary());
    } else {
        std::cout << "inconclusive: " << d.culprits.size() << " candidate rules\n";
        for (const auto& c : d.culprits) {
            std::cout << "candidate symptom: " << dom.format(c.symptom) << "\n";
            print(c);
        }
    }
    return 0;
}

int serve(const std::string& host, int port) {
    fdx::Service service;
    httplib::Server server;
    fdx::mount(server, service);
    std::cout << "listening on http://" << host << ":" << port << std::endl;
    if (!server.listen(host, port)) throw Failure{exit_usage, "cannot listen on " + host + ":" + std::to_string(port)};
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-domain propagation with explanations and missing-answer diagnosis"};
    app.require_subcommand(1);

    std::string model, value, host = "127.0.0.1";
    bool trace = false;
    std::optional<std::uint64_t> seed;
    std::size_t cap = fdx::default_node_cap;
    int port = 8080;
    DiagnoseOptions dopts;

    auto* solve_cmd = app.add_subcommand("solve", "Print the closure of a model");
    solve_cmd->add_option("model", model, "Model file (.fd)")->required();
    solve_cmd->add_flag("--trace", trace, "Print every propagation step");
    solve_cmd->add_option("--seed", seed, "Shuffle the schedule with this seed");

    auto* explain_cmd = app.add_subcommand("explain", "Print the explanation of a removed value");
    explain_cmd->add_option("model", model, "Model file (.fd)")->required();
    explain_cmd->add_option("--value", value, "Pair as VAR=value")->required();
    explain_cmd->add_option("--seed", seed, "Shuffle the schedule with this seed");
    explain_cmd->add_option("--cap", cap, "Maximum number of materialized nodes");

    auto* diag_cmd = app.add_subcommand("diagnose", "Locate an erroneous constraint from a missing answer");
    diag_cmd->add_option("model", dopts.model, "Model file (.fd)")->required();
    diag_cmd->add_option("expected", dopts.expected, "Expected environment (.expect)")->required();
    diag_cmd->add_option("script,--script", dopts.script, "Answers file: one YES/NO/UNKNOWN per line");
    diag_cmd->add_option("--strategy", dopts.strategy, "dac or topdown")->capture_default_str();
    diag_cmd->add_option("--symptom", dopts.symptom, "Symptom to diagnose as VAR=value (default: first found)");
    diag_cmd->add_option("--seed", dopts.seed, "Shuffle the schedule with this seed");
    diag_cmd->add_flag("--json", dopts.json, "Print the diagnosis as JSON");

    auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
    serve_cmd->add_option("--port", port, "Port")->capture_default_str();
    serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        auto rc = app.exit(e);
        return rc == 0 ? 0 : exit_usage;
    }

    try {
        if (*solve_cmd) return solve(model, trace, seed);
        if (*explain_cmd) return explain(model, value, seed, cap);
        if (*diag_cmd) return diagnose(dopts);
        if (*serve_cmd) return serve(host, port);
    } catch (const Failure& f) {
        std::cerr << "fdx: " << f.message << "\n";
        return f.code;
    } catch (const fdx::Error& e) {
        std::cerr << "fdx: " << e.what() << "\n";
        return exit_usage;
    }
    return 0;
}
