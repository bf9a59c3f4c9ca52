#pragma once

#include "seqdesign/service.hpp"

namespace httplib {
class Server;
}

namespace seqdesign {

/// Routes:
///   GET  /healthz
///   POST /trials                      body: trial config
///   GET  /trials/{id}                 snapshot
///   GET  /trials/{id}/events?since=k  log records after seq k
///   POST /trials/{id}/subjects        body: {"covariates": [...]}
///   POST /trials/{id}/responses       body: {"subject_index": k, "y": 0|1}
/// Errors are {"error": {"code", "message", "details"}}.
void mount_routes(httplib::Server& server, TrialRegistry& registry);

}  // namespace seqdesign
