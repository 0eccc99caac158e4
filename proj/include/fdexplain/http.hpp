#ifndef FDEXPLAIN_HTTP_HPP
#define FDEXPLAIN_HTTP_HPP

// Routes the Service onto a cpp-httplib server.

#include "service.hpp"

#include <httplib.h>

namespace fdx {

inline void mount(httplib::Server& server, Service& service) {
    auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/models", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.create_model(req.body));
    });
    server.Get(R"(/models/([^/]+)/explanation)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("var") || !req.has_param("value")) {
            reply(res, {400, Json{{"error", "query needs var and value"}}});
            return;
        }
        reply(res, service.explanation(req.matches[1], req.get_param_value("var"), req.get_param_value("value")));
    });
    server.Post(R"(/models/([^/]+)/sessions)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.create_session(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([^/]+))", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.session(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/answer)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.answer(req.matches[1], req.body));
    });
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

} // namespace fdx

#endif // FDEXPLAIN_HTTP_HPP
