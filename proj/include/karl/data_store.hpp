#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "karl/clock.hpp"
#include "karl/error.hpp"

namespace karl {

/// Opaque payload bytes.
using Bytes = std::string;

struct Entry {
  std::uint64_t id = 0;
  Millis timestamp = 0;
  Bytes payload;

  bool operator==(const Entry&) const = default;
};

struct DataStoreOptions {
  /// One `<percent-encoded tag>.log` file per tag under this directory.
  /// In-memory only when unset.
  std::optional<std::filesystem::path> directory;
  /// Maximum entries per tag; 0 means unlimited.
  std::size_t default_quota = 0;
  std::map<std::string, std::size_t> quotas;
  /// fsync after every append.
  bool sync = false;
};

/// Tag-keyed append-only logs indexed by timestamp.
class DataStore {
 public:
  explicit DataStore(DataStoreOptions options = {});
  ~DataStore();

  DataStore(const DataStore&) = delete;
  DataStore& operator=(const DataStore&) = delete;

  /// Makes `tag` readable before its first push. Idempotent.
  void declare(std::string_view tag);
  bool has_tag(std::string_view tag) const;
  std::vector<std::string> tags() const;

  /// Appends and returns the new entry id (first id is 1). A timestamp
  /// older than the tag's newest entry is clamped up to it. Throws
  /// StorageFull when the tag's quota is reached.
  std::uint64_t push(std::string_view tag, Millis timestamp, Bytes payload);

  /// Entries with lower <= timestamp <= upper, in id order. Throws
  /// UnknownTag, InvalidArgument when lower > upper.
  std::vector<Entry> read(std::string_view tag, Millis lower, Millis upper) const;
  std::vector<Entry> read_last_n(std::string_view tag, std::size_t n) const;
  /// Throws UnknownTag or UnknownEntry.
  Entry read_event(std::string_view tag, std::uint64_t entry_id) const;
  std::size_t size(std::string_view tag) const;
  std::uint64_t last_id(std::string_view tag) const;

  /// Bumped on every append; pair with wait_for_change for long-polling.
  std::uint64_t change_counter() const;
  /// Blocks until the counter moves past `seen` or the timeout elapses.
  bool wait_for_change(std::uint64_t seen, Clock& clock, Duration timeout) const;

  /// Percent-encodes every byte outside [A-Za-z0-9_.-].
  static std::string file_name_for(std::string_view tag);
  static std::string tag_for_file_name(std::string_view file_name);

 private:
  struct TagLog;

  TagLog* find(std::string_view tag) const;
  TagLog& find_or_create(std::string_view tag);
  void recover();

  DataStoreOptions options_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<TagLog>, std::less<>> logs_;

  mutable std::mutex change_mutex_;
  mutable std::condition_variable change_cv_;
  std::uint64_t changes_ = 0;
};

}  // namespace karl
