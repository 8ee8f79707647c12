#include "karl/audit.hpp"

#include <fstream>

namespace karl {

std::string_view to_string(AuditRecord::Kind k) {
  switch (k) {
    case AuditRecord::Kind::network: return "network";
    case AuditRecord::Kind::denied: return "denied";
    case AuditRecord::Kind::failure: return "failure";
    case AuditRecord::Kind::exhausted: return "exhausted";
  }
  return "unknown";
}

namespace {

AuditRecord::Kind kind_from(const std::string& s) {
  for (auto k : {AuditRecord::Kind::network, AuditRecord::Kind::denied,
                 AuditRecord::Kind::failure, AuditRecord::Kind::exhausted})
    if (to_string(k) == s) return k;
  throw Error(Errc::ValidationFailure, "unknown audit kind '" + s + "'");
}

}  // namespace

Json AuditRecord::to_json() const {
  return {{"seq", seq},
          {"kind", to_string(kind)},
          {"timestamp", timestamp},
          {"instance", instance},
          {"pipelines", pipelines},
          {"domain", domain},
          {"bytes_out", bytes_out},
          {"bytes_in", bytes_in},
          {"graph_version", graph_version},
          {"detail", detail}};
}

AuditRecord AuditRecord::from_json(const Json& j) {
  AuditRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.kind = kind_from(j.at("kind").get<std::string>());
  r.timestamp = j.at("timestamp").get<Millis>();
  r.instance = j.value("instance", "");
  r.pipelines = j.value("pipelines", std::vector<std::string>{});
  r.domain = j.value("domain", "");
  r.bytes_out = j.value("bytes_out", std::uint64_t{0});
  r.bytes_in = j.value("bytes_in", std::uint64_t{0});
  r.graph_version = j.value("graph_version", std::uint64_t{0});
  r.detail = j.value("detail", "");
  return r;
}

AuditLog::AuditLog(std::optional<std::filesystem::path> file) : file_(std::move(file)) {
  if (!file_) return;
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records_.push_back(AuditRecord::from_json(Json::parse(line)));
    } catch (const std::exception&) {
      break;  // torn last line
    }
  }
}

std::uint64_t AuditLog::append(AuditRecord record) {
  std::lock_guard lock(mutex_);
  record.seq = records_.empty() ? 1 : records_.back().seq + 1;
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    out << record.to_json().dump() << '\n';
  }
  records_.push_back(std::move(record));
  return records_.back().seq;
}

std::vector<AuditRecord> AuditLog::query(const AuditQuery& q) const {
  std::lock_guard lock(mutex_);
  std::vector<AuditRecord> out;
  for (const auto& r : records_) {
    if (r.seq <= q.after_seq) continue;
    if (q.kind && r.kind != *q.kind) continue;
    if (!q.instance.empty() && r.instance != q.instance) continue;
    if (!q.domain.empty() && r.domain != q.domain) continue;
    out.push_back(r);
    if (q.limit != 0 && out.size() == q.limit) break;
  }
  return out;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

}  // namespace karl
