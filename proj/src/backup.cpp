#include "examlab/backup.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "examlab/digest.hpp"
#include "examlab/error.hpp"

namespace examlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool is_valid_workspace_path(std::string_view path) {
  if (path.empty() || path.front() == '/') return false;
  for (char c : path)
    if (c == '\\' || c == '\0' || c == '\n' || c == '\r' || c == '\t') return false;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t end = std::min(path.find('/', start), path.size());
    const std::string_view segment = path.substr(start, end - start);
    if (segment.empty() || segment == "." || segment == "..") return false;
    start = end + 1;
  }
  return true;
}

void Workspace::validate() const {
  for (const auto& [path, content] : files) {
    if (!is_valid_workspace_path(path)) throw Error(Errc::invalid_path, "invalid workspace path: '" + path + "'");
    for (auto slash = path.find('/'); slash != std::string::npos; slash = path.find('/', slash + 1)) {
      if (files.contains(path.substr(0, slash)))
        throw Error(Errc::invalid_path, "path is both a file and a directory: '" + path.substr(0, slash) + "'");
    }
  }
}

std::string_view to_string(SnapshotKind kind) {
  switch (kind) {
    case SnapshotKind::Periodic: return "Periodic";
    case SnapshotKind::Final: return "Final";
    case SnapshotKind::Manual: return "Manual";
  }
  return "?";
}

namespace {

SnapshotKind parse_kind(std::string_view text) {
  for (auto k : {SnapshotKind::Periodic, SnapshotKind::Final, SnapshotKind::Manual})
    if (to_string(k) == text) return k;
  throw Error(Errc::parse_error, "unknown snapshot kind: " + std::string(text));
}

bool is_path_segment(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_' || c == '.'; });
}

void write_file_atomically(const fs::path& path, std::string_view content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(Errc::storage_failure, "cannot create " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp-" + random_hex(6);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw Error(Errc::storage_failure, "cannot write " + path.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(Errc::storage_failure, "cannot install " + path.string());
  }
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void to_json(json& j, const Snapshot& s) {
  j = json{{"snapshot_id", s.snapshot_id},
           {"session_id", s.session_id},
           {"student_uid", s.student_uid},
           {"seq", s.seq},
           {"captured_at", seconds_of(s.captured_at)},
           {"kind", to_string(s.kind)},
           {"manifest", s.manifest}};
}

void from_json(const json& j, Snapshot& s) {
  s.snapshot_id = j.at("snapshot_id").get<std::string>();
  s.session_id = j.at("session_id").get<std::string>();
  s.student_uid = j.at("student_uid").get<std::string>();
  s.seq = j.at("seq").get<std::int64_t>();
  s.captured_at = at_second(j.at("captured_at").get<std::int64_t>());
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.manifest = j.at("manifest").get<std::map<std::string, std::string>>();
}

std::string snapshot_id_for(std::string_view session_id, std::string_view student_uid, std::int64_t seq,
                            const std::map<std::string, std::string>& manifest) {
  std::string canonical = "examlab.snapshot.v1\n";
  canonical += "session:";
  canonical += session_id;
  canonical += "\nstudent:";
  canonical += student_uid;
  canonical += "\nseq:" + std::to_string(seq) + "\n";
  for (const auto& [path, digest] : manifest) canonical += path + "\t" + digest + "\n";
  return sha256_hex(canonical);
}

void BackupPolicy::validate() const {
  if (interval.count() <= 0) throw Error(Errc::invalid_argument, "backup interval must be > 0");
}

std::vector<BackupTick> due_ticks(const BackupPolicy& policy, Timestamp open_time, Timestamp close_time) {
  policy.validate();
  if (close_time <= open_time) throw Error(Errc::invalid_argument, "close time must be after open time");
  std::vector<BackupTick> ticks;
  for (Timestamp t = open_time + policy.interval; t < close_time; t += policy.interval)
    ticks.push_back({t, SnapshotKind::Periodic});
  if (policy.final_on_close) ticks.push_back({close_time, SnapshotKind::Final});
  return ticks;
}

SnapshotStore::SnapshotStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "blobs", ec);
  fs::create_directories(root_ / "snapshots", ec);
  if (ec) throw Error(Errc::storage_failure, "cannot create store at " + root_.string() + ": " + ec.message());

  for (const auto& entry : fs::recursive_directory_iterator(root_ / "snapshots")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    auto text = read_file(entry.path());
    if (!text) throw Error(Errc::storage_failure, "cannot read " + entry.path().string());
    Snapshot s;
    try {
      s = json::parse(*text).get<Snapshot>();
    } catch (const json::exception& e) {
      throw Error(Errc::storage_failure, "corrupt snapshot record " + entry.path().string() + ": " + e.what());
    }
    if (snapshot_id_for(s.session_id, s.student_uid, s.seq, s.manifest) != s.snapshot_id)
      throw Error(Errc::storage_failure, "snapshot record does not match its id: " + entry.path().string());
    by_id_.emplace(s.snapshot_id, Key{s.session_id, s.student_uid});
    index_[Key{s.session_id, s.student_uid}].push_back(std::move(s));
  }
  for (auto& [key, snaps] : index_) {
    std::sort(snaps.begin(), snaps.end(), [](const Snapshot& a, const Snapshot& b) { return a.seq < b.seq; });
    for (std::size_t i = 0; i < snaps.size(); ++i)
      if (snaps[i].seq != static_cast<std::int64_t>(i + 1))
        throw Error(Errc::storage_failure, "gap in snapshot sequence for " + key.session_id + "/" + key.student_uid);
  }
}

fs::path SnapshotStore::blob_path(std::string_view digest) const {
  return root_ / "blobs" / std::string(digest.substr(0, 2)) / std::string(digest);
}

bool SnapshotStore::put_blob(const std::string& digest, std::string_view content) {
  std::lock_guard lock(blob_locks_[std::hash<std::string>{}(digest) % blob_locks_.size()]);
  const fs::path path = blob_path(digest);
  std::error_code ec;
  if (fs::exists(path, ec)) return false;
  write_file_atomically(path, content);
  return true;
}

Snapshot SnapshotStore::capture(const Workspace& workspace, std::string_view session_id, Timestamp now,
                                SnapshotKind kind) {
  workspace.validate();
  if (!is_path_segment(session_id)) throw Error(Errc::invalid_argument, "invalid session id");
  if (!is_path_segment(workspace.student_uid)) throw Error(Errc::invalid_argument, "invalid student uid");

  std::map<std::string, std::string> manifest;
  for (const auto& [path, content] : workspace.files) {
    auto digest = sha256_hex(content);
    put_blob(digest, content);
    manifest.emplace(path, std::move(digest));
  }

  std::lock_guard lock(index_mu_);
  auto& snaps = index_[Key{std::string(session_id), workspace.student_uid}];
  Snapshot s;
  s.session_id = session_id;
  s.student_uid = workspace.student_uid;
  s.seq = static_cast<std::int64_t>(snaps.size()) + 1;
  s.captured_at = now;
  s.kind = kind;
  s.manifest = std::move(manifest);
  s.snapshot_id = snapshot_id_for(s.session_id, s.student_uid, s.seq, s.manifest);

  const fs::path record =
      root_ / "snapshots" / s.session_id / s.student_uid / (std::to_string(s.seq) + ".json");
  std::error_code ec;
  if (fs::exists(record, ec)) throw Error(Errc::storage_failure, "snapshot record already exists: " + record.string());
  write_file_atomically(record, json(s).dump(2) + "\n");

  by_id_.emplace(s.snapshot_id, Key{s.session_id, s.student_uid});
  snaps.push_back(s);
  return s;
}

std::vector<Snapshot> SnapshotStore::timeline(std::string_view session_id, std::string_view student_uid) const {
  std::lock_guard lock(index_mu_);
  auto it = index_.find(Key{std::string(session_id), std::string(student_uid)});
  if (it == index_.end()) return {};
  return it->second;
}

std::optional<Snapshot> SnapshotStore::find(std::string_view snapshot_id) const {
  std::lock_guard lock(index_mu_);
  auto it = by_id_.find(snapshot_id);
  if (it == by_id_.end()) return std::nullopt;
  for (const auto& s : index_.at(it->second))
    if (s.snapshot_id == snapshot_id) return s;
  return std::nullopt;
}

void SnapshotStore::require_known(const Snapshot& s) const {
  auto found = find(s.snapshot_id);
  if (!found || found->manifest != s.manifest)
    throw Error(Errc::unknown_snapshot, "unknown snapshot: " + s.snapshot_id);
}

SnapshotDiff SnapshotStore::diff(const Snapshot& a, const Snapshot& b) const {
  require_known(a);
  require_known(b);
  SnapshotDiff d;
  for (const auto& [path, digest] : b.manifest) {
    auto it = a.manifest.find(path);
    if (it == a.manifest.end()) {
      d.added.push_back(path);
    } else if (it->second != digest) {
      d.modified.push_back(path);
    }
  }
  for (const auto& [path, digest] : a.manifest)
    if (!b.manifest.contains(path)) d.removed.push_back(path);
  return d;
}

std::size_t SnapshotStore::restore(const Snapshot& snapshot, const fs::path& destination) const {
  require_known(snapshot);
  std::error_code ec;
  if (fs::exists(destination, ec)) {
    if (!fs::is_directory(destination, ec) || !fs::is_empty(destination, ec))
      throw Error(Errc::destination_not_empty, "restore destination is not empty: " + destination.string());
  }

  // Verify everything before writing anything.
  std::vector<std::pair<std::string, std::string>> files;
  files.reserve(snapshot.manifest.size());
  for (const auto& [path, digest] : snapshot.manifest) {
    auto content = read_file(blob_path(digest));
    if (!content) throw Error(Errc::missing_blob, "missing blob " + digest + " (" + path + ")");
    if (sha256_hex(*content) != digest) throw Error(Errc::corrupt_blob, "corrupt blob " + digest + " (" + path + ")");
    files.emplace_back(path, std::move(*content));
  }

  fs::create_directories(destination, ec);
  if (ec) throw Error(Errc::storage_failure, "cannot create " + destination.string() + ": " + ec.message());
  for (const auto& [path, content] : files) {
    const fs::path target = destination / path;
    fs::create_directories(target.parent_path(), ec);
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::storage_failure, "cannot write " + target.string());
  }
  return files.size();
}

std::size_t SnapshotStore::blob_count() const {
  std::size_t n = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root_ / "blobs"))
    if (entry.is_regular_file() && entry.path().filename().string().find(".tmp-") == std::string::npos) ++n;
  return n;
}

}  // namespace examlab
