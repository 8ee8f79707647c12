#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "karl/package.hpp"
#include "karl/runtime.hpp"

namespace karl {

struct Job {
  Trigger trigger;
  ModuleInstance instance;
  ExecutionContext ctx;
  ProgramFactory factory;
};

struct AttemptResult {
  enum class Status { completed, failed, timed_out };
  Status status = Status::completed;
  std::string error;
  Millis started = 0;
  Millis finished = 0;
  /// Time from start to the first mediated call (or to the end when the
  /// program made none); -1 when unknown.
  Millis init_ms = -1;
  bool warm = false;
};

std::string_view to_string(AttemptResult::Status s);

enum class WorkerState { idle, warming, busy };

/// The module-side half of the mediation boundary: forwards each call to the
/// broker under the bound context. Until a context is bound the first call
/// blocks, which is where a warm start pauses.
class GatedApi final : public ModuleApi {
 public:
  GatedApi(Broker& broker, Clock& clock) : broker_(broker), clock_(clock) {}

  void bind(ExecutionContext ctx);
  void cancel();
  bool cancelled() const;
  /// Clock reading at the first call, if one happened.
  std::optional<Millis> first_call_at() const;

  std::vector<Entry> read(std::string_view port, Millis lower, Millis upper) override;
  std::vector<Entry> read_last_n(std::string_view port, std::size_t n) override;
  Entry read_event(std::string_view port) override;
  std::map<std::string, std::uint64_t> push(std::string_view port, Bytes payload) override;
  NetResponse network(std::string_view domain, const NetRequest& request) override;
  Clock& clock() override { return clock_; }

 private:
  const ExecutionContext& await();

  Broker& broker_;
  Clock& clock_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<ExecutionContext> ctx_;
  std::optional<Millis> first_call_;
  bool cancelled_ = false;
};

/// A sandbox slot. The base class owns the package cache; subclasses decide
/// how a job executes.
class Worker {
 public:
  Worker(int id, std::uint64_t cache_budget_bytes,
         std::optional<std::filesystem::path> cache_root = std::nullopt);
  virtual ~Worker();

  int id() const { return id_; }

  bool probe(const std::string& hash) const;
  /// Unpacks `blob` into the cache, evicting least-recently-used packages to
  /// stay within budget. Throws TransferFailure on a bad blob or when the
  /// package alone exceeds the budget.
  void install(const std::string& hash, const Bytes& blob);
  void evict(const std::string& hash);
  /// Marks a cached package as just used.
  void touch(const std::string& hash);
  std::vector<std::string> cached() const;
  std::uint64_t cache_bytes() const;
  std::uint64_t bytes_received() const;
  std::filesystem::path package_dir(const std::string& hash) const;

  virtual AttemptResult run(Job job, Duration timeout) = 0;
  virtual void warm_start(const ModuleInstance& instance, ProgramFactory factory);
  /// Binds a job to the warm instance. Without a warm instance this is a
  /// cold run; a different warm instance throws WarmMismatch.
  virtual AttemptResult resume(Job job, Duration timeout);
  virtual void cancel_warm() {}
  /// Instance currently warming, if any.
  virtual std::optional<std::string> warming() const { return std::nullopt; }
  /// True once a warm instance is parked at its first call (or finished).
  virtual bool warm_ready() const { return false; }
  virtual WorkerState state() const = 0;

 protected:
  const int id_;

 private:
  struct CacheEntry {
    std::uint64_t size = 0;
    std::list<std::string>::iterator lru;
  };

  const std::uint64_t budget_;
  std::optional<std::filesystem::path> cache_root_;
  mutable std::mutex cache_mutex_;
  std::map<std::string, CacheEntry> cache_;
  std::list<std::string> lru_;  // front: most recent
  std::uint64_t cache_bytes_ = 0;
  std::uint64_t received_ = 0;
};

/// Runs programs on a dedicated thread per execution behind a GatedApi.
class SandboxWorker final : public Worker {
 public:
  SandboxWorker(int id, Broker& broker, Clock& clock, std::uint64_t cache_budget_bytes,
                std::optional<std::filesystem::path> cache_root = std::nullopt);
  ~SandboxWorker() override;

  AttemptResult run(Job job, Duration timeout) override;
  void warm_start(const ModuleInstance& instance, ProgramFactory factory) override;
  AttemptResult resume(Job job, Duration timeout) override;
  void cancel_warm() override;
  std::optional<std::string> warming() const override;
  bool warm_ready() const override;
  WorkerState state() const override;

 private:
  struct Execution;

  std::shared_ptr<Execution> launch(const ModuleInstance& instance, const ProgramFactory& factory,
                                    std::optional<ExecutionContext> ctx);
  AttemptResult finish(const std::shared_ptr<Execution>& ex, Duration timeout, bool warm, Millis begin);
  void reap();

  Broker& broker_;
  Clock& clock_;
  mutable std::mutex mutex_;
  WorkerState state_ = WorkerState::idle;
  std::shared_ptr<Execution> warm_;
  std::vector<std::shared_ptr<Execution>> stale_;
};

enum class CacheResult { hit, transferred, retransferred };

std::string_view to_string(CacheResult r);

/// Controller-side record of which packages were sent to which worker.
class PackageTracker {
 public:
  /// Throws TransferFailure when the catalog lacks the blob.
  CacheResult ensure_cached(Worker& worker, const ModuleManifest& manifest,
                            const PackageCatalog& catalog);
  bool believes_cached(int worker, const std::string& hash) const;
  std::uint64_t bytes_sent() const;
  std::uint64_t hits() const;
  std::uint64_t transfers() const;
  std::uint64_t retransfers() const;

 private:
  mutable std::mutex mutex_;
  std::set<std::pair<int, std::string>> sent_;
  std::uint64_t bytes_sent_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t transfers_ = 0;
  std::uint64_t retransfers_ = 0;
};

}  // namespace karl
