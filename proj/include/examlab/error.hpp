#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace examlab {

// Error codes are part of the CLI and HTTP contract: their string form never
// changes with message wording.
enum class Errc {
  invalid_argument,
  parse_error,
  io_error,
  duplicate_name,
  unknown_node_type,
  malformed_timeline,
  invalid_spec,
  duplicate_cluster,
  unknown_handle,
  not_running,
  unknown_node,
  node_not_healthy,
  provider_failure,
  pod_too_large,
  duplicate_uid,
  unknown_role,
  malformed_row,
  invalid_credentials,
  not_teacher,
  unknown_student,
  session_expired,
  invalid_path,
  storage_failure,
  unknown_snapshot,
  missing_blob,
  corrupt_blob,
  destination_not_empty,
  validation,
  illegal_transition,
  not_expired,
  capacity,
  missing_final,
  backup_guard,
  base_url_unset,
  unknown_session,
  login_closed,
  too_early,
  unauthenticated,
  not_found,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Validation failure carrying one message per offending field.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems);

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace examlab
