#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "examlab/time.hpp"

namespace examlab {

enum class Role { Student, Teacher };

std::string_view to_string(Role role);

// Salted PBKDF2-HMAC-SHA256. Plaintext is never stored.
struct SecretDigest {
  std::string salt_hex;
  std::string hash_hex;
  int iterations = 0;
};

struct User {
  std::string uid;
  std::string full_name;
  Role role = Role::Student;
  SecretDigest secret_digest;
};

struct AuthSession {
  std::string token;
  std::string uid;
  Role role = Role::Student;
  std::optional<std::string> acting_as;
  Timestamp issued_at;
  Timestamp expires_at;

  bool expired(Timestamp now) const { return now >= expires_at; }
};

// The workspace this session views: the impersonated student, if any.
std::string_view effective_workspace(const AuthSession& session);

enum class DenyReason { Expired, Forbidden };
std::string_view to_string(DenyReason reason);

struct Allow {
  friend bool operator==(const Allow&, const Allow&) = default;
};
struct Deny {
  DenyReason reason = DenyReason::Forbidden;
  friend bool operator==(const Deny&, const Deny&) = default;
};
using AuthzDecision = std::variant<Allow, Deny>;

// Students reach only their own workspace; teachers reach any.
AuthzDecision authorize(const AuthSession& session, std::string_view target_workspace, Timestamp now);

struct AuditEvent {
  Timestamp t;
  std::string actor;
  std::string action;
  std::string target;
};

// Seam for swapping the in-memory store for a networked directory.
class Authenticator {
 public:
  virtual ~Authenticator() = default;
  // Throws Errc::invalid_credentials for an unknown uid and for a wrong
  // secret alike.
  virtual AuthSession authenticate(std::string_view uid, std::string_view secret, Timestamp now) = 0;
};

class Directory final : public Authenticator {
 public:
  struct Options {
    Duration session_lifetime{4 * 3600};
    int kdf_iterations = 10000;
  };

  Directory() : Directory(Options{}) {}
  explicit Directory(Options options);

  // CSV with header uid,full_name,role,initial_secret. All-or-nothing.
  std::size_t import_roster(const std::filesystem::path& path);
  std::size_t import_roster(std::istream& csv);
  void add_user(std::string uid, std::string full_name, Role role, std::string_view secret);

  AuthSession authenticate(std::string_view uid, std::string_view secret, Timestamp now) override;
  AuthSession impersonate(const AuthSession& teacher, std::string_view student_uid, Timestamp now);

  // Session previously issued under this token, whether or not it expired.
  std::optional<AuthSession> resolve(std::string_view token) const;

  std::optional<User> find(std::string_view uid) const;
  std::vector<User> users(std::optional<Role> role = std::nullopt) const;
  std::size_t size() const;

  std::vector<AuditEvent> audit() const;
  // Mirrors every audit event to `path` as JSON-lines {t, actor, action, target}.
  void set_audit_log(const std::filesystem::path& path);

  const Options& options() const { return options_; }

 private:
  SecretDigest derive(std::string_view secret, std::string salt_hex) const;
  void record(AuditEvent event);
  AuthSession issue(const User& user, std::optional<std::string> acting_as, Timestamp now, Timestamp expires);

  Options options_;
  SecretDigest decoy_;
  mutable std::shared_mutex mu_;
  std::map<std::string, User, std::less<>> users_;
  // Keyed by a digest of the token, not the token itself.
  std::map<std::string, AuthSession, std::less<>> sessions_;
  mutable std::mutex audit_mu_;
  std::vector<AuditEvent> audit_;
  std::optional<std::ofstream> audit_file_;
};

}  // namespace examlab
