#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "karl/host.hpp"
#include "karl/worker.hpp"

namespace karl {

struct PlacementPolicy {
  bool prefer_cached = true;
  Duration base_timeout{1000};
  double timeout_multiplier = 2.0;
  int max_attempts = 4;
  bool warm_enabled = true;
  /// Instances whose measured init exceeds this are pre-warmed.
  Duration warm_threshold{500};

  /// Timeout for attempt k (1-based): base × multiplier^(k−1).
  Duration timeout_for(int attempt) const;

  Json to_json() const;
  static PlacementPolicy from_json(const Json& j);
};

/// What placement sees of a worker.
struct WorkerView {
  int id = 0;
  bool available = false;  // idle, or warming something
  std::optional<std::string> warming;
  bool cached = false;
};

/// The placement rule on its own: a worker warming this instance, then one
/// with the package cached (when preferred), then the lowest id. Workers in
/// `failed` are skipped unless every worker has failed. nullopt: wait.
std::optional<int> choose_worker(const std::vector<WorkerView>& workers,
                                 const std::string& instance, const std::set<int>& failed,
                                 bool prefer_cached);

struct AttemptRecord {
  std::uint64_t trigger_seq = 0;
  std::string instance;
  int attempt = 0;
  int worker = 0;
  Millis timeout_ms = 0;
  AttemptResult::Status status = AttemptResult::Status::completed;
  std::optional<CacheResult> cache;
  bool warm = false;
  Millis started = 0;
  Millis finished = 0;
  std::string error;
};

struct Completion {
  std::uint64_t trigger_seq = 0;
  Trigger trigger;
  enum class Outcome { completed, failed, exhausted } outcome = Outcome::completed;
  int attempts = 0;
  int worker = 0;
  Millis enqueued_at = 0;
  Millis finished_at = 0;
  std::string error;
};

/// One FIFO queue of triggers fed to a pool of workers. Retries go to the
/// front of the queue. Dispatch happens whenever a trigger arrives or a
/// worker frees up; each worker has its own execution thread.
class Scheduler {
 public:
  explicit Scheduler(ModuleHost& host, PlacementPolicy policy = {});
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  void add_worker(std::shared_ptr<Worker> worker);
  Worker& worker(int id) const;
  std::vector<int> worker_ids() const;

  /// Returns the trigger's 0-based position in the queue. Throws
  /// UnknownInstance.
  std::size_t enqueue(Trigger trigger);

  /// While paused nothing is dispatched.
  void set_paused(bool paused);
  /// Blocks until the queue is empty and no worker is executing.
  void drain();

  /// Interval instances due at `now`, in instance-id order. Each emits at
  /// most one tick; next-due then advances by whole periods past `now`.
  std::vector<Trigger> tick_intervals(Millis now);
  std::optional<Millis> next_due(const std::string& instance) const;

  /// Cancels every warm instance; called after any graph change.
  void invalidate_warm();

  std::size_t queue_depth() const;
  std::vector<Trigger> queued() const;
  std::vector<AttemptRecord> attempts() const;
  std::vector<Completion> completions() const;
  void on_completion(std::function<void(const Completion&)> callback);

  const PlacementPolicy& policy() const { return policy_; }
  Json metrics() const;

 private:
  struct Item {
    std::uint64_t seq = 0;
    Trigger trigger;
    int attempt = 1;
    std::set<int> failed;
    Millis enqueued_at = 0;
  };
  struct Slot;

  void dispatch_locked();
  void slot_loop(Slot& slot);
  void execute(Slot& slot, Item item);
  bool idle_locked() const;

  ModuleHost& host_;
  const PlacementPolicy policy_;
  mutable std::mutex mutex_;
  std::condition_variable idle_cv_;
  std::deque<Item> queue_;
  std::vector<std::unique_ptr<Slot>> slots_;
  std::uint64_t next_seq_ = 1;
  bool paused_ = false;
  bool stopping_ = false;

  std::map<std::string, Millis> next_due_;
  std::map<std::string, Millis> init_ms_;
  std::map<std::string, std::map<int, std::uint64_t>> attempt_hist_;
  std::vector<AttemptRecord> attempt_log_;
  std::vector<Completion> completions_;
  std::vector<std::function<void(const Completion&)>> callbacks_;
  std::uint64_t warm_starts_ = 0;
  std::uint64_t warm_resumes_ = 0;
};

}  // namespace karl
