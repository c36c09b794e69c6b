#include "examlab/error.hpp"

namespace examlab {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::parse_error: return "parse-error";
    case Errc::io_error: return "io-error";
    case Errc::duplicate_name: return "duplicate-name";
    case Errc::unknown_node_type: return "unknown-node-type";
    case Errc::malformed_timeline: return "malformed-timeline";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::duplicate_cluster: return "duplicate-cluster";
    case Errc::unknown_handle: return "unknown-handle";
    case Errc::not_running: return "cluster-not-running";
    case Errc::unknown_node: return "unknown-node";
    case Errc::node_not_healthy: return "node-not-healthy";
    case Errc::provider_failure: return "provider-failure";
    case Errc::pod_too_large: return "pod-too-large";
    case Errc::duplicate_uid: return "duplicate-uid";
    case Errc::unknown_role: return "unknown-role";
    case Errc::malformed_row: return "malformed-row";
    case Errc::invalid_credentials: return "invalid-credentials";
    case Errc::not_teacher: return "not-teacher";
    case Errc::unknown_student: return "unknown-student";
    case Errc::session_expired: return "session-expired";
    case Errc::invalid_path: return "invalid-path";
    case Errc::storage_failure: return "storage-failure";
    case Errc::unknown_snapshot: return "unknown-snapshot";
    case Errc::missing_blob: return "missing-blob";
    case Errc::corrupt_blob: return "corrupt-blob";
    case Errc::destination_not_empty: return "destination-not-empty";
    case Errc::validation: return "validation";
    case Errc::illegal_transition: return "illegal-transition";
    case Errc::not_expired: return "exam-not-expired";
    case Errc::capacity: return "capacity";
    case Errc::missing_final: return "missing-final";
    case Errc::backup_guard: return "backup-guard";
    case Errc::base_url_unset: return "base-url-unset";
    case Errc::unknown_session: return "unknown-session";
    case Errc::login_closed: return "login-closed";
    case Errc::too_early: return "exam-not-open-yet";
    case Errc::unauthenticated: return "unauthenticated";
    case Errc::not_found: return "not-found";
  }
  return "unknown";
}

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "validation failed";
  for (const auto& p : problems) {
    out += "\n  - ";
    out += p;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(Errc::validation, join_problems(problems)), problems_(std::move(problems)) {}

}  // namespace examlab
