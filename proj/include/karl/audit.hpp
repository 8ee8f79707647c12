#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "karl/clock.hpp"
#include "karl/graph_json.hpp"

namespace karl {

struct AuditRecord {
  enum class Kind { network, denied, failure, exhausted };

  std::uint64_t seq = 0;
  Kind kind = Kind::network;
  Millis timestamp = 0;
  std::string instance;
  /// Permission texts the access is justified by (network records).
  std::vector<std::string> pipelines;
  std::string domain;
  std::uint64_t bytes_out = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t graph_version = 0;
  std::string detail;

  Json to_json() const;
  static AuditRecord from_json(const Json& j);
};

std::string_view to_string(AuditRecord::Kind k);

struct AuditQuery {
  std::optional<AuditRecord::Kind> kind;
  std::string instance;
  std::string domain;
  std::uint64_t after_seq = 0;
  std::size_t limit = 0;  // 0: no limit
};

/// Append-only, optionally mirrored to a JSONL file.
class AuditLog {
 public:
  explicit AuditLog(std::optional<std::filesystem::path> file = std::nullopt);

  std::uint64_t append(AuditRecord record);
  std::vector<AuditRecord> query(const AuditQuery& q = {}) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> file_;
  std::vector<AuditRecord> records_;
};

}  // namespace karl
