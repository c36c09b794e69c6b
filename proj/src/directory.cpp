#include "examlab/directory.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>
#include <openssl/crypto.h>
#include <openssl/evp.h>

#include "examlab/digest.hpp"
#include "examlab/error.hpp"

namespace examlab {

std::string_view to_string(Role role) { return role == Role::Teacher ? "teacher" : "student"; }

std::string_view to_string(DenyReason reason) { return reason == DenyReason::Expired ? "expired" : "forbidden"; }

std::string_view effective_workspace(const AuthSession& session) {
  return session.acting_as ? std::string_view(*session.acting_as) : std::string_view(session.uid);
}

AuthzDecision authorize(const AuthSession& session, std::string_view target_workspace, Timestamp now) {
  if (session.expired(now)) return Deny{DenyReason::Expired};
  if (session.role == Role::Teacher) return Allow{};
  if (target_workspace == session.uid) return Allow{};
  return Deny{DenyReason::Forbidden};
}

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_' || c == '.'; });
}

// RFC 4180 fields on one physical line. Returns nullopt on an unterminated quote.
std::optional<std::vector<std::string>> split_csv(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) return std::nullopt;
  return fields;
}

std::optional<Role> parse_role(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "student") return Role::Student;
  if (lower == "teacher") return Role::Teacher;
  return std::nullopt;
}

std::string token_key(std::string_view token) { return sha256_hex(token); }

}  // namespace

Directory::Directory(Options options) : options_(options) {
  if (options_.kdf_iterations < 1) throw Error(Errc::invalid_argument, "kdf_iterations must be >= 1");
  if (options_.session_lifetime.count() <= 0) throw Error(Errc::invalid_argument, "session lifetime must be > 0");
  decoy_ = derive(random_hex(16), random_hex(16));
}

SecretDigest Directory::derive(std::string_view secret, std::string salt_hex) const {
  unsigned char out[32];
  if (PKCS5_PBKDF2_HMAC(secret.data(), static_cast<int>(secret.size()),
                        reinterpret_cast<const unsigned char*>(salt_hex.data()), static_cast<int>(salt_hex.size()),
                        options_.kdf_iterations, EVP_sha256(), sizeof out, out) != 1)
    throw Error(Errc::io_error, "key derivation failed");
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string hex;
  for (unsigned char b : out) {
    hex += kDigits[b >> 4];
    hex += kDigits[b & 0xf];
  }
  return SecretDigest{std::move(salt_hex), std::move(hex), options_.kdf_iterations};
}

std::size_t Directory::import_roster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open roster: " + path.string());
  return import_roster(in);
}

std::size_t Directory::import_roster(std::istream& csv) {
  struct Row {
    std::string uid, full_name;
    Role role;
    std::string secret;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(csv, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line != "uid,full_name,role,initial_secret")
        throw Error(Errc::malformed_row, "line 1: expected header uid,full_name,role,initial_secret");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    auto fields = split_csv(line);
    if (!fields) throw Error(Errc::malformed_row, where + ": unterminated quote");
    if (fields->size() != 4)
      throw Error(Errc::malformed_row, where + ": expected 4 fields, got " + std::to_string(fields->size()));
    auto& f = *fields;
    if (!is_identifier(f[0])) throw Error(Errc::malformed_row, where + ": invalid uid '" + f[0] + "'");
    auto role = parse_role(f[2]);
    if (!role) throw Error(Errc::unknown_role, where + ": unknown role '" + f[2] + "'");
    if (f[3].empty()) throw Error(Errc::malformed_row, where + ": empty initial_secret");
    rows.push_back(Row{std::move(f[0]), std::move(f[1]), *role, std::move(f[3])});
  }
  if (!header_seen) throw Error(Errc::malformed_row, "line 1: missing header");

  {
    std::shared_lock lock(mu_);
    std::map<std::string_view, int> seen;
    for (const auto& r : rows) {
      if (users_.contains(r.uid) || ++seen[r.uid] > 1) throw Error(Errc::duplicate_uid, "duplicate uid: " + r.uid);
    }
  }

  std::vector<User> users;
  users.reserve(rows.size());
  for (auto& r : rows) users.push_back(User{r.uid, r.full_name, r.role, derive(r.secret, random_hex(16))});

  std::unique_lock lock(mu_);
  for (const auto& u : users)
    if (users_.contains(u.uid)) throw Error(Errc::duplicate_uid, "duplicate uid: " + u.uid);
  for (auto& u : users) {
    auto uid = u.uid;
    users_.emplace(std::move(uid), std::move(u));
  }
  return users.size();
}

void Directory::add_user(std::string uid, std::string full_name, Role role, std::string_view secret) {
  if (!is_identifier(uid)) throw Error(Errc::invalid_argument, "invalid uid '" + uid + "'");
  User user{uid, std::move(full_name), role, derive(secret, random_hex(16))};
  std::unique_lock lock(mu_);
  if (users_.contains(uid)) throw Error(Errc::duplicate_uid, "duplicate uid: " + uid);
  users_.emplace(std::move(uid), std::move(user));
}

AuthSession Directory::issue(const User& user, std::optional<std::string> acting_as, Timestamp now,
                             Timestamp expires) {
  AuthSession s;
  s.token = random_hex(32);
  s.uid = user.uid;
  s.role = user.role;
  s.acting_as = std::move(acting_as);
  s.issued_at = now;
  s.expires_at = expires;
  std::unique_lock lock(mu_);
  sessions_.emplace(token_key(s.token), s);
  return s;
}

AuthSession Directory::authenticate(std::string_view uid, std::string_view secret, Timestamp now) {
  std::optional<User> user = find(uid);
  // Unknown users pay for a derivation too, against a decoy digest.
  const SecretDigest& expected = user ? user->secret_digest : decoy_;
  const SecretDigest actual = derive(secret, expected.salt_hex);
  const bool match = expected.hash_hex.size() == actual.hash_hex.size() &&
                     CRYPTO_memcmp(expected.hash_hex.data(), actual.hash_hex.data(), actual.hash_hex.size()) == 0;
  if (!user || !match) throw Error(Errc::invalid_credentials, "invalid credentials");
  return issue(*user, std::nullopt, now, now + options_.session_lifetime);
}

AuthSession Directory::impersonate(const AuthSession& teacher, std::string_view student_uid, Timestamp now) {
  if (teacher.expired(now)) throw Error(Errc::session_expired, "session expired");
  auto caller = find(teacher.uid);
  if (!caller || caller->role != Role::Teacher || teacher.role != Role::Teacher)
    throw Error(Errc::not_teacher, "only teachers may impersonate");
  auto student = find(student_uid);
  if (!student || student->role != Role::Student)
    throw Error(Errc::unknown_student, "unknown student: " + std::string(student_uid));
  auto session = issue(*caller, student->uid, now, teacher.expires_at);
  record(AuditEvent{now, caller->uid, "impersonate", student->uid});
  return session;
}

std::optional<AuthSession> Directory::resolve(std::string_view token) const {
  const auto key = token_key(token);
  std::shared_lock lock(mu_);
  auto it = sessions_.find(key);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::optional<User> Directory::find(std::string_view uid) const {
  std::shared_lock lock(mu_);
  auto it = users_.find(uid);
  if (it == users_.end()) return std::nullopt;
  return it->second;
}

std::vector<User> Directory::users(std::optional<Role> role) const {
  std::shared_lock lock(mu_);
  std::vector<User> out;
  for (const auto& [uid, u] : users_)
    if (!role || u.role == *role) out.push_back(u);
  return out;
}

std::size_t Directory::size() const {
  std::shared_lock lock(mu_);
  return users_.size();
}

std::vector<AuditEvent> Directory::audit() const {
  std::lock_guard lock(audit_mu_);
  return audit_;
}

void Directory::set_audit_log(const std::filesystem::path& path) {
  std::lock_guard lock(audit_mu_);
  audit_file_.emplace(path, std::ios::app);
  if (!*audit_file_) throw Error(Errc::io_error, "cannot open audit log: " + path.string());
}

void Directory::record(AuditEvent event) {
  std::lock_guard lock(audit_mu_);
  if (audit_file_) {
    *audit_file_ << nlohmann::json{{"t", seconds_of(event.t)},
                                   {"actor", event.actor},
                                   {"action", event.action},
                                   {"target", event.target}}
                        .dump()
                 << '\n';
    audit_file_->flush();
  }
  audit_.push_back(std::move(event));
}

}  // namespace examlab
