#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "examlab/time.hpp"

namespace examlab {

// Relative, normalized, no "." or ".." segments, no backslashes.
bool is_valid_workspace_path(std::string_view path);

struct Workspace {
  std::string student_uid;
  std::map<std::string, std::string> files;  // path -> bytes

  // Throws Errc::invalid_path.
  void validate() const;
};

enum class SnapshotKind { Periodic, Final, Manual };
std::string_view to_string(SnapshotKind kind);

struct Snapshot {
  std::string snapshot_id;
  std::string session_id;
  std::string student_uid;
  std::int64_t seq = 0;
  Timestamp captured_at;
  SnapshotKind kind = SnapshotKind::Periodic;
  std::map<std::string, std::string> manifest;  // path -> content digest

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

void to_json(nlohmann::json& j, const Snapshot& s);
void from_json(const nlohmann::json& j, Snapshot& s);

// Digest over a canonical, path-sorted serialization of the inputs.
std::string snapshot_id_for(std::string_view session_id, std::string_view student_uid, std::int64_t seq,
                            const std::map<std::string, std::string>& manifest);

struct BackupPolicy {
  Duration interval{900};
  bool final_on_close = true;

  void validate() const;
};

struct BackupTick {
  Timestamp at;
  SnapshotKind kind = SnapshotKind::Periodic;
  friend bool operator==(const BackupTick&, const BackupTick&) = default;
};

// open + k*interval for k >= 1 strictly before close, then one Final at close.
std::vector<BackupTick> due_ticks(const BackupPolicy& policy, Timestamp open_time, Timestamp close_time);

struct SnapshotDiff {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::vector<std::string> modified;

  bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

// On-disk layout:
//   blobs/<first2>/<digest>                    write-once content
//   snapshots/<session>/<student>/<seq>.json   snapshot records
class SnapshotStore {
 public:
  // Opens (or creates) a store and indexes the snapshot records found there.
  explicit SnapshotStore(std::filesystem::path root);

  SnapshotStore(const SnapshotStore&) = delete;
  SnapshotStore& operator=(const SnapshotStore&) = delete;

  // Throws Errc::invalid_path, Errc::invalid_argument or Errc::storage_failure.
  Snapshot capture(const Workspace& workspace, std::string_view session_id, Timestamp now, SnapshotKind kind);

  std::vector<Snapshot> timeline(std::string_view session_id, std::string_view student_uid) const;
  std::optional<Snapshot> find(std::string_view snapshot_id) const;

  // Throws Errc::unknown_snapshot.
  SnapshotDiff diff(const Snapshot& a, const Snapshot& b) const;

  // Rebuilds the captured files under `destination`, verifying every digest.
  // Throws Errc::destination_not_empty, Errc::unknown_snapshot,
  // Errc::missing_blob or Errc::corrupt_blob.
  std::size_t restore(const Snapshot& snapshot, const std::filesystem::path& destination) const;

  std::size_t blob_count() const;
  std::filesystem::path blob_path(std::string_view digest) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  struct Key {
    std::string session_id;
    std::string student_uid;
    auto operator<=>(const Key&) const = default;
  };

  bool put_blob(const std::string& digest, std::string_view content);
  void require_known(const Snapshot& s) const;

  std::filesystem::path root_;
  mutable std::mutex index_mu_;
  std::map<Key, std::vector<Snapshot>> index_;
  std::map<std::string, Key, std::less<>> by_id_;
  std::array<std::mutex, 64> blob_locks_;
};

}  // namespace examlab
