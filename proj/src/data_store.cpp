#include "karl/data_store.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <unistd.h>

namespace karl {

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

constexpr std::size_t kHeader = 4 + 8 + 8;

}  // namespace

struct DataStore::TagLog {
  std::string tag;
  mutable std::shared_mutex mutex;
  std::vector<Entry> entries;
  int fd = -1;

  ~TagLog() {
    if (fd >= 0) ::close(fd);
  }
};

DataStore::DataStore(DataStoreOptions options) : options_(std::move(options)) {
  if (options_.directory) {
    std::filesystem::create_directories(*options_.directory);
    recover();
  }
}

DataStore::~DataStore() = default;

std::string DataStore::file_name_for(std::string_view tag) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : tag) {
    if (std::isalnum(c) || c == '_' || c == '.' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out + ".log";
}

std::string DataStore::tag_for_file_name(std::string_view name) {
  if (name.size() >= 4 && name.substr(name.size() - 4) == ".log")
    name.remove_suffix(4);
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(name.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(name[i]);
    }
  }
  return out;
}

void DataStore::recover() {
  for (const auto& file : std::filesystem::directory_iterator(*options_.directory)) {
    if (!file.is_regular_file() || file.path().extension() != ".log") continue;
    auto tag = tag_for_file_name(file.path().filename().string());
    auto log = std::make_unique<TagLog>();
    log->tag = tag;

    int fd = ::open(file.path().c_str(), O_RDWR);
    if (fd < 0) throw Error(Errc::InvalidArgument, "cannot open " + file.path().string());
    std::string data;
    char buf[1 << 16];
    for (;;) {
      auto n = ::read(fd, buf, sizeof buf);
      if (n <= 0) break;
      data.append(buf, static_cast<std::size_t>(n));
    }
    // Keep every complete record; a torn tail from a crash is cut off.
    std::size_t pos = 0;
    while (pos + kHeader <= data.size()) {
      auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
      auto len = get_le(p, 4);
      if (pos + kHeader + len > data.size()) break;
      Entry e;
      e.id = get_le(p + 4, 8);
      e.timestamp = static_cast<Millis>(get_le(p + 12, 8));
      e.payload.assign(data.data() + pos + kHeader, len);
      log->entries.push_back(std::move(e));
      pos += kHeader + len;
    }
    if (pos != data.size()) {
      if (::ftruncate(fd, static_cast<off_t>(pos)) != 0)
        throw Error(Errc::InvalidArgument, "cannot truncate torn log " + file.path().string());
    }
    ::lseek(fd, 0, SEEK_END);
    log->fd = fd;
    logs_.emplace(tag, std::move(log));
  }
}

DataStore::TagLog* DataStore::find(std::string_view tag) const {
  std::shared_lock lock(map_mutex_);
  auto it = logs_.find(tag);
  return it == logs_.end() ? nullptr : it->second.get();
}

DataStore::TagLog& DataStore::find_or_create(std::string_view tag) {
  if (auto* log = find(tag)) return *log;
  std::unique_lock lock(map_mutex_);
  auto it = logs_.find(tag);
  if (it != logs_.end()) return *it->second;
  auto log = std::make_unique<TagLog>();
  log->tag = std::string(tag);
  if (options_.directory) {
    auto path = *options_.directory / file_name_for(tag);
    log->fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND, 0644);
    if (log->fd < 0) throw Error(Errc::InvalidArgument, "cannot create " + path.string());
  }
  auto& ref = *log;
  logs_.emplace(std::string(tag), std::move(log));
  return ref;
}

void DataStore::declare(std::string_view tag) { find_or_create(tag); }

bool DataStore::has_tag(std::string_view tag) const { return find(tag) != nullptr; }

std::vector<std::string> DataStore::tags() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [tag, _] : logs_) out.push_back(tag);
  return out;
}

std::uint64_t DataStore::push(std::string_view tag, Millis timestamp, Bytes payload) {
  auto& log = find_or_create(tag);
  std::uint64_t id;
  {
    std::unique_lock lock(log.mutex);
    std::size_t quota = options_.default_quota;
    if (auto q = options_.quotas.find(std::string(tag)); q != options_.quotas.end())
      quota = q->second;
    if (quota != 0 && log.entries.size() >= quota)
      throw Error(Errc::StorageFull,
                  "tag '" + std::string(tag) + "' reached its quota of " +
                      std::to_string(quota) + " entries",
                  std::string(tag));
    if (!log.entries.empty()) timestamp = std::max(timestamp, log.entries.back().timestamp);
    id = log.entries.empty() ? 1 : log.entries.back().id + 1;
    if (log.fd >= 0) {
      std::string record;
      record.reserve(kHeader + payload.size());
      put_le(record, payload.size(), 4);
      put_le(record, id, 8);
      put_le(record, static_cast<std::uint64_t>(timestamp), 8);
      record += payload;
      std::size_t off = 0;
      while (off < record.size()) {
        auto n = ::write(log.fd, record.data() + off, record.size() - off);
        if (n < 0) {
          if (errno == EINTR) continue;
          throw Error(Errc::StorageFull, std::string("write failed: ") + std::strerror(errno),
                      std::string(tag));
        }
        off += static_cast<std::size_t>(n);
      }
      if (options_.sync) ::fsync(log.fd);
    }
    log.entries.push_back({id, timestamp, std::move(payload)});
  }
  {
    std::lock_guard lock(change_mutex_);
    ++changes_;
  }
  change_cv_.notify_all();
  return id;
}

std::vector<Entry> DataStore::read(std::string_view tag, Millis lower, Millis upper) const {
  if (lower > upper) throw Error(Errc::InvalidArgument, "lower bound exceeds upper bound");
  auto* log = find(tag);
  if (!log) throw Error(Errc::UnknownTag, "unknown tag '" + std::string(tag) + "'", std::string(tag));
  std::shared_lock lock(log->mutex);
  auto first = std::lower_bound(log->entries.begin(), log->entries.end(), lower,
                                [](const Entry& e, Millis t) { return e.timestamp < t; });
  auto last = std::upper_bound(first, log->entries.end(), upper,
                               [](Millis t, const Entry& e) { return t < e.timestamp; });
  return {first, last};
}

std::vector<Entry> DataStore::read_last_n(std::string_view tag, std::size_t n) const {
  auto* log = find(tag);
  if (!log) throw Error(Errc::UnknownTag, "unknown tag '" + std::string(tag) + "'", std::string(tag));
  std::shared_lock lock(log->mutex);
  n = std::min(n, log->entries.size());
  return {log->entries.end() - static_cast<long>(n), log->entries.end()};
}

Entry DataStore::read_event(std::string_view tag, std::uint64_t entry_id) const {
  auto* log = find(tag);
  if (!log) throw Error(Errc::UnknownTag, "unknown tag '" + std::string(tag) + "'", std::string(tag));
  std::shared_lock lock(log->mutex);
  // Ids are dense from 1.
  if (entry_id == 0 || entry_id > log->entries.size())
    throw Error(Errc::UnknownEntry,
                "tag '" + std::string(tag) + "' has no entry " + std::to_string(entry_id),
                std::to_string(entry_id));
  return log->entries[entry_id - 1];
}

std::size_t DataStore::size(std::string_view tag) const {
  auto* log = find(tag);
  if (!log) return 0;
  std::shared_lock lock(log->mutex);
  return log->entries.size();
}

std::uint64_t DataStore::last_id(std::string_view tag) const {
  auto* log = find(tag);
  if (!log) return 0;
  std::shared_lock lock(log->mutex);
  return log->entries.empty() ? 0 : log->entries.back().id;
}

std::uint64_t DataStore::change_counter() const {
  std::lock_guard lock(change_mutex_);
  return changes_;
}

bool DataStore::wait_for_change(std::uint64_t seen, Clock& clock, Duration timeout) const {
  std::unique_lock lock(change_mutex_);
  return clock.wait_for(lock, change_cv_, timeout, [&] { return changes_ != seen; });
}

}  // namespace karl
