#include "seqdesign/http_api.hpp"

#include <httplib.h>

#include <functional>

namespace seqdesign {

using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body.empty() ? std::string("{}") : req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "invalid_json", e.what());
  }
}

// Runs a handler, mapping failures onto the error document.
void guarded(httplib::Response& res, const std::function<void()>& handler) {
  try {
    handler();
  } catch (const ServiceError& e) {
    send(res, e.status(), e.to_json());
  } catch (const std::exception& e) {
    send(res, 500, ServiceError(500, "internal_error", e.what()).to_json());
  }
}

}  // namespace

void mount_routes(httplib::Server& server, TrialRegistry& registry) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send(res, 200, {{"status", "ok"}});
  });
  server.Post("/trials", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 201, registry.create_trial(parse_body(req))); });
  });
  server.Get(R"(/trials/([A-Za-z0-9_-]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, registry.snapshot(req.matches[1])); });
  });
  server.Get(R"(/trials/([A-Za-z0-9_-]+)/events)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 std::uint64_t since = 0;
                 if (req.has_param("since")) {
                   try {
                     since = std::stoull(req.get_param_value("since"));
                   } catch (const std::exception&) {
                     throw ServiceError(400, "invalid_request", "'since' must be a non-negative integer");
                   }
                 }
                 send(res, 200, registry.events(req.matches[1], since));
               });
             });
  server.Post(R"(/trials/([A-Za-z0-9_-]+)/subjects)",
              [&](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] { send(res, 200, registry.enroll(req.matches[1], parse_body(req))); });
              });
  server.Post(R"(/trials/([A-Za-z0-9_-]+)/responses)",
              [&](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  send(res, 200, registry.record_response(req.matches[1], parse_body(req)));
                });
              });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty())
      send(res, res.status, ServiceError(res.status, res.status == 404 ? "not_found" : "http_error",
                                         "no such route").to_json());
  });
}

}  // namespace seqdesign
