#ifndef FDEXPLAIN_SERVICE_HPP
#define FDEXPLAIN_SERVICE_HPP

// In-memory model and diagnosis-session registry behind the HTTP API.
// Requests and responses are JSON values; the transport lives in http.hpp.

#include "core.hpp"
#include "diagnosis.hpp"
#include "model_lang.hpp"
#include "propagation.hpp"

#include <chrono>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

namespace fdx {

struct Response {
    int status = 200;
    Json body;
};

class Service {
public:
    struct Model {
        std::string id;
        Csp csp;
        ProgramPtr program;
        Closure closure;
        std::string hash;
    };

    struct Session {
        std::string id;
        std::shared_ptr<const Model> model;
        ValuePair symptom;
        std::string created_at;
        std::mutex mutex;
        DiagnosisSession session;

        Session(std::string id_, std::shared_ptr<const Model> m, ValuePair s, std::string at, DiagnosisSession ds)
            : id(std::move(id_)), model(std::move(m)), symptom(s), created_at(std::move(at)), session(std::move(ds)) {}
    };

    Service() : rng_(std::random_device{}()) {}

    /// POST /models. `body` is model text, or JSON {"model": text}.
    Response create_model(const std::string& body) {
        std::string text = body;
        if (auto j = Json::parse(body, nullptr, false); !j.is_discarded() && j.is_object()) {
            if (!j.contains("model") || !j["model"].is_string()) return error(400, "expected {\"model\": text}");
            text = j["model"].get<std::string>();
        }
        std::shared_ptr<Model> m;
        try {
            auto csp = parse_model(text);
            auto prog = Program::compile(csp);
            auto closure = chaotic_iteration(prog);
            auto hash = model_hash(csp);
            m = std::make_shared<Model>(Model{"", std::move(csp), std::move(prog), std::move(closure), std::move(hash)});
        } catch (const Error& e) {
            return error(400, e.what());
        }
        {
            std::lock_guard lock(mutex_);
            m->id = token("m");
            models_.emplace(m->id, m);
        }
        Json j{{"model_id", m->id},
               {"model_hash", m->hash},
               {"variables", m->csp.domains().var_count()},
               {"constraints", m->csp.constraints().size()},
               {"operators", m->program->operators().size()},
               {"removed", m->closure.store.size()},
               {"closure", environment_to_json(m->closure.final_env)}};
        return {201, std::move(j)};
    }

    /// GET /models/{id}/explanation?var=&value=
    Response explanation(const std::string& model_id, const std::string& var, const std::string& value) {
        auto m = find_model(model_id);
        if (!m) return error(404, "unknown model '" + model_id + "'");
        ValuePair p;
        try {
            p = parse_pair(var + "=" + value, m->csp.domains());
        } catch (const Error& e) {
            return error(400, e.what());
        }
        auto tree = explanation_for(m->closure, p);
        Json j{{"var", var}, {"value", p.value}, {"kept", !tree}};
        if (tree) j["explanation"] = export_explanation(*tree, m->csp.domains(), {m->hash, m->closure.seed}, m->program.get());
        return {200, std::move(j)};
    }

    /// POST /models/{id}/sessions with {"var", "value", "strategy"}.
    Response create_session(const std::string& model_id, const std::string& body) {
        auto m = find_model(model_id);
        if (!m) return error(404, "unknown model '" + model_id + "'");
        auto j = Json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) return error(400, "expected a JSON object");
        std::shared_ptr<Session> s;
        try {
            auto p = pair_from_json(m->csp.domains(), j);
            auto strategy = parse_strategy(j.value("strategy", std::string("dac")));
            if (!strategy) return error(400, "strategy must be 'dac' or 'topdown'");
            auto ds = new_session(m->closure, p, *strategy);
            std::lock_guard lock(mutex_);
            auto id = token("s");
            s = std::make_shared<Session>(id, m, p, now(), std::move(ds));
            sessions_.emplace(id, s);
        } catch (const Error& e) {
            return error(400, e.what());
        }
        std::lock_guard lock(s->mutex);
        auto out = progress(*s);
        out["session_id"] = s->id;
        return {201, std::move(out)};
    }

    /// GET /sessions/{id}
    Response session(const std::string& id) {
        auto s = find_session(id);
        if (!s) return error(404, "unknown session '" + id + "'");
        std::lock_guard lock(s->mutex);
        return {200, describe_session(*s)};
    }

    /// POST /sessions/{id}/answer; body is YES|NO|UNKNOWN or
    /// {"answer": ..., optional "var"/"value" naming the question answered}.
    Response answer(const std::string& id, const std::string& body) {
        auto s = find_session(id);
        if (!s) return error(404, "unknown session '" + id + "'");
        std::optional<Answer> a;
        std::optional<Json> node;
        if (auto j = Json::parse(body, nullptr, false); !j.is_discarded() && (j.is_object() || j.is_string())) {
            if (j.is_string()) {
                a = parse_answer(j.get<std::string>());
            } else if (j.contains("answer") && j["answer"].is_string()) {
                a = parse_answer(j["answer"].get<std::string>());
                if (j.contains("var")) node = j;
            }
        } else {
            auto t = body;
            t.erase(0, t.find_first_not_of(" \t\r\n"));
            t.erase(t.find_last_not_of(" \t\r\n") + 1);
            a = parse_answer(t);
        }
        if (!a) return error(400, "answer must be YES, NO or UNKNOWN");

        std::lock_guard lock(s->mutex);
        if (s->session.done()) return error(409, "session is finished");
        auto q = s->session.next_question();
        if (node) {
            try {
                if (pair_from_json(s->model->csp.domains(), *node) != q)
                    return error(409, "answer refers to a question that is not pending");
            } catch (const Error& e) {
                return error(400, e.what());
            }
        }
        s->session.answer(q, *a);
        return {200, progress(*s)};
    }

private:
    static Response error(int status, const std::string& msg) { return {status, Json{{"error", msg}}}; }

    static std::string now() {
        auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    // Caller holds mutex_.
    std::string token(const char* prefix) {
        static constexpr char hex[] = "0123456789abcdef";
        while (true) {
            std::string t = prefix;
            for (int i = 0; i < 16; ++i) t += hex[rng_() & 15];
            if (!models_.contains(t) && !sessions_.contains(t)) return t;
        }
    }

    std::shared_ptr<const Model> find_model(const std::string& id) {
        std::lock_guard lock(mutex_);
        auto it = models_.find(id);
        return it == models_.end() ? nullptr : it->second;
    }
    std::shared_ptr<Session> find_session(const std::string& id) {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    // Caller holds s.mutex.
    static Json progress(const Session& s) {
        const auto& dom = s.model->csp.domains();
        Json j{{"state", s.session.done() ? "DONE" : "QUESTION_PENDING"}};
        if (s.session.done()) {
            j["question"] = nullptr;
            j["diagnosis"] = diagnosis_to_json(s.session.result(), dom, s.model->program.get());
        } else {
            j["question"] = question_to_json(dom, s.session.next_question());
        }
        return j;
    }

    static Json describe_session(const Session& s) {
        const auto& dom = s.model->csp.domains();
        const auto& ds = s.session;
        auto j = progress(s);
        j["session_id"] = s.id;
        j["model_id"] = s.model->id;
        j["created_at"] = s.created_at;
        j["strategy"] = to_string(ds.strategy());
        j["symptom"] = pair_to_json(dom, s.symptom);
        j["candidate_root"] = ds.candidate();
        Json nodes = Json::array();
        for (std::size_t i = 0; i < ds.nodes().size(); ++i) {
            const auto& n = ds.nodes()[i];
            Json children = Json::array();
            for (auto c : n.children) children.push_back(c);
            Json rec{{"id", i}, {"var", dom.name(n.pair.var)}, {"value", n.pair.value}};
            rec["constraint"] = n.rule ? Json(n.rule->constraint_label) : Json(nullptr);
            rec["status"] = to_string(ds.status(i));
            rec["pending"] = ds.pending_node() == i;
            rec["children"] = std::move(children);
            nodes.push_back(std::move(rec));
        }
        j["tree"] = std::move(nodes);
        Json transcript = Json::array();
        for (const auto& [p, a] : ds.transcript()) {
            auto t = pair_to_json(dom, p);
            t["answer"] = to_string(a);
            transcript.push_back(std::move(t));
        }
        j["transcript"] = std::move(transcript);
        return j;
    }

    std::mutex mutex_;
    std::mt19937_64 rng_;
    std::map<std::string, std::shared_ptr<const Model>> models_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

} // namespace fdx

#endif // FDEXPLAIN_SERVICE_HPP
