#include "karl/scheduler.hpp"

#include <algorithm>
#include <cmath>

namespace karl {

Duration PlacementPolicy::timeout_for(int attempt) const {
  double ms = static_cast<double>(base_timeout.count()) *
              std::pow(timeout_multiplier, std::max(0, attempt - 1));
  return Duration{static_cast<Duration::rep>(std::llround(ms))};
}

Json PlacementPolicy::to_json() const {
  return {{"prefer_cached", prefer_cached},
          {"base_timeout_ms", base_timeout.count()},
          {"timeout_multiplier", timeout_multiplier},
          {"max_attempts", max_attempts},
          {"warm_enabled", warm_enabled},
          {"warm_threshold_ms", warm_threshold.count()}};
}

PlacementPolicy PlacementPolicy::from_json(const Json& j) {
  PlacementPolicy p;
  p.prefer_cached = j.value("prefer_cached", p.prefer_cached);
  p.base_timeout = Duration{j.value("base_timeout_ms", p.base_timeout.count())};
  p.timeout_multiplier = j.value("timeout_multiplier", p.timeout_multiplier);
  p.max_attempts = j.value("max_attempts", p.max_attempts);
  p.warm_enabled = j.value("warm_enabled", p.warm_enabled);
  p.warm_threshold = Duration{j.value("warm_threshold_ms", p.warm_threshold.count())};
  if (p.timeout_multiplier <= 1.0)
    throw Error(Errc::ValidationFailure, "timeout_multiplier must exceed 1");
  if (p.max_attempts < 1) throw Error(Errc::ValidationFailure, "max_attempts must be at least 1");
  if (p.base_timeout.count() <= 0)
    throw Error(Errc::ValidationFailure, "base_timeout_ms must be positive");
  return p;
}

std::optional<int> choose_worker(const std::vector<WorkerView>& workers,
                                 const std::string& instance, const std::set<int>& failed,
                                 bool prefer_cached) {
  std::vector<const WorkerView*> pool;
  bool healthy_exists = false;
  for (const auto& w : workers) {
    if (failed.contains(w.id)) continue;
    healthy_exists = true;
    if (w.available) pool.push_back(&w);
  }
  if (pool.empty()) {
    if (healthy_exists) return std::nullopt;
    for (const auto& w : workers)
      if (w.available) pool.push_back(&w);
  }
  if (pool.empty()) return std::nullopt;
  std::sort(pool.begin(), pool.end(),
            [](const WorkerView* a, const WorkerView* b) { return a->id < b->id; });
  for (const auto* w : pool)
    if (w->warming && *w->warming == instance) return w->id;
  if (prefer_cached)
    for (const auto* w : pool)
      if (w->cached) return w->id;
  return pool.front()->id;
}

struct Scheduler::Slot {
  std::shared_ptr<Worker> worker;
  std::thread thread;
  std::condition_variable cv;
  std::optional<Item> job;
  std::optional<std::string> warm;
  bool busy = false;
};

Scheduler::Scheduler(ModuleHost& host, PlacementPolicy policy)
    : host_(host), policy_(std::move(policy)) {}

Scheduler::~Scheduler() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
    queue_.clear();
    for (auto& s : slots_) s->cv.notify_all();
  }
  for (auto& s : slots_)
    if (s->thread.joinable()) s->thread.join();
}

void Scheduler::add_worker(std::shared_ptr<Worker> worker) {
  std::lock_guard lock(mutex_);
  for (const auto& s : slots_)
    if (s->worker->id() == worker->id())
      throw Error(Errc::IdCollision, "worker " + std::to_string(worker->id()) + " already added");
  auto slot = std::make_unique<Slot>();
  slot->worker = std::move(worker);
  auto* raw = slot.get();
  slots_.push_back(std::move(slot));
  std::sort(slots_.begin(), slots_.end(),
            [](const auto& a, const auto& b) { return a->worker->id() < b->worker->id(); });
  raw->thread = std::thread([this, raw] { slot_loop(*raw); });
  dispatch_locked();
}

Worker& Scheduler::worker(int id) const {
  std::lock_guard lock(mutex_);
  for (const auto& s : slots_)
    if (s->worker->id() == id) return *s->worker;
  throw Error(Errc::InvalidArgument, "no worker " + std::to_string(id));
}

std::vector<int> Scheduler::worker_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<int> out;
  for (const auto& s : slots_) out.push_back(s->worker->id());
  return out;
}

std::size_t Scheduler::enqueue(Trigger trigger) {
  if (host_.graph()->find_module(trigger.instance_id) == nullptr)
    throw Error(Errc::UnknownInstance, "no module instance '" + trigger.instance_id + "'",
                trigger.instance_id);
  std::lock_guard lock(mutex_);
  Item item;
  item.seq = next_seq_++;
  item.trigger = std::move(trigger);
  item.enqueued_at = host_.clock().now_ms();
  queue_.push_back(std::move(item));
  std::size_t pos = queue_.size() - 1;
  dispatch_locked();
  return pos;
}

void Scheduler::set_paused(bool paused) {
  std::lock_guard lock(mutex_);
  paused_ = paused;
  dispatch_locked();
  idle_cv_.notify_all();
}

void Scheduler::dispatch_locked() {
  if (paused_ || stopping_) return;
  auto graph = host_.graph();
  for (auto it = queue_.begin(); it != queue_.end();) {
    std::string hash;
    if (const auto* m = graph->find_module(it->trigger.instance_id))
      hash = m->manifest.package.hash;
    std::vector<WorkerView> views;
    for (const auto& s : slots_) {
      WorkerView v;
      v.id = s->worker->id();
      v.available = !s->busy;
      if (v.available) {
        v.warming = s->worker->warming();
        v.cached = !hash.empty() && host_.tracker().believes_cached(v.id, hash) &&
                   s->worker->probe(hash);
      }
      views.push_back(std::move(v));
    }
    auto chosen = choose_worker(views, it->trigger.instance_id, it->failed, policy_.prefer_cached);
    if (!chosen) {
      ++it;
      continue;
    }
    for (auto& s : slots_) {
      if (s->worker->id() != *chosen) continue;
      s->busy = true;
      s->warm.reset();
      s->job = std::move(*it);
      s->cv.notify_all();
      break;
    }
    it = queue_.erase(it);
  }
}

void Scheduler::slot_loop(Slot& slot) {
  std::unique_lock lock(mutex_);
  for (;;) {
    slot.cv.wait(lock, [&] { return stopping_ || slot.job || slot.warm; });
    if (stopping_) return;
    if (slot.job) {
      Item item = std::move(*slot.job);
      slot.job.reset();
      lock.unlock();
      execute(slot, std::move(item));
      lock.lock();
      continue;
    }
    std::string instance = std::move(*slot.warm);
    slot.warm.reset();
    lock.unlock();
    try {
      auto inst = host_.instance(instance);
      if (!inst.manifest.package.hash.empty()) host_.ensure_cached(*slot.worker, inst.manifest);
      slot.worker->warm_start(inst, host_.program_for(inst.manifest));
      lock.lock();
      ++warm_starts_;
    } catch (const std::exception&) {
      lock.lock();
    }
    idle_cv_.notify_all();
  }
}

void Scheduler::execute(Slot& slot, Item item) {
  AttemptRecord rec;
  rec.trigger_seq = item.seq;
  rec.instance = item.trigger.instance_id;
  rec.attempt = item.attempt;
  rec.worker = slot.worker->id();
  Duration timeout = policy_.timeout_for(item.attempt);
  rec.timeout_ms = timeout.count();

  AttemptResult result;
  try {
    Job job = host_.prepare(item.trigger);
    timeout = std::min(timeout, host_.cap_for(job.instance));
    rec.timeout_ms = timeout.count();
    if (!job.instance.manifest.package.hash.empty())
      rec.cache = host_.ensure_cached(*slot.worker, job.instance.manifest);
    result = slot.worker->run(std::move(job), timeout);
  } catch (const std::exception& e) {
    result.status = AttemptResult::Status::failed;
    result.error = e.what();
    result.started = result.finished = host_.clock().now_ms();
  }

  std::vector<std::function<void(const Completion&)>> callbacks;
  std::optional<Completion> done;
  {
    std::lock_guard lock(mutex_);
    rec.status = result.status;
    rec.warm = result.warm;
    rec.started = result.started;
    rec.finished = result.finished;
    rec.error = result.error;
    attempt_log_.push_back(rec);

    const auto& inst = item.trigger.instance_id;
    auto finish = [&](Completion::Outcome outcome) {
      Completion c;
      c.trigger_seq = item.seq;
      c.trigger = item.trigger;
      c.outcome = outcome;
      c.attempts = item.attempt;
      c.worker = slot.worker->id();
      c.enqueued_at = item.enqueued_at;
      c.finished_at = result.finished;
      c.error = result.error;
      ++attempt_hist_[inst][item.attempt];
      completions_.push_back(c);
      done = c;
    };

    switch (result.status) {
      case AttemptResult::Status::completed:
        if (result.warm) ++warm_resumes_;
        if (!result.warm && result.init_ms >= 0) init_ms_[inst] = result.init_ms;
        finish(Completion::Outcome::completed);
        break;
      case AttemptResult::Status::failed: {
        AuditRecord r;
        r.kind = AuditRecord::Kind::failure;
        r.timestamp = result.finished;
        r.instance = inst;
        r.graph_version = host_.version();
        r.detail = "ExecutionFailure: " + result.error;
        host_.audit().append(std::move(r));
        finish(Completion::Outcome::failed);
        break;
      }
      case AttemptResult::Status::timed_out:
        if (item.attempt < policy_.max_attempts) {
          Item retry = item;
          ++retry.attempt;
          retry.failed.insert(slot.worker->id());
          queue_.push_front(std::move(retry));
        } else {
          AuditRecord r;
          r.kind = AuditRecord::Kind::exhausted;
          r.timestamp = result.finished;
          r.instance = inst;
          r.graph_version = host_.version();
          r.detail = "Exhausted after " + std::to_string(item.attempt) + " attempts";
          host_.audit().append(std::move(r));
          result.error = r.detail;
          finish(Completion::Outcome::exhausted);
        }
        break;
    }

    slot.busy = false;
    if (policy_.warm_enabled && result.status == AttemptResult::Status::completed) {
      auto it = init_ms_.find(inst);
      if (it != init_ms_.end() && it->second > policy_.warm_threshold.count()) {
        slot.warm = inst;
        slot.cv.notify_all();
      }
    }
    dispatch_locked();
    if (done) callbacks = callbacks_;
  }
  idle_cv_.notify_all();
  if (done)
    for (const auto& cb : callbacks) cb(*done);
}

bool Scheduler::idle_locked() const {
  if (!paused_ && !queue_.empty()) return false;
  for (const auto& s : slots_)
    if (s->busy || s->warm) return false;
  return true;
}

void Scheduler::drain() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [&] { return idle_locked(); });
}

std::vector<Trigger> Scheduler::tick_intervals(Millis now) {
  auto graph = host_.graph();
  std::lock_guard lock(mutex_);
  std::vector<Trigger> out;
  std::map<std::string, Millis> kept;
  for (const auto& [id, m] : graph->modules) {
    if (m.schedule.kind != Schedule::Kind::interval) continue;
    const Millis period = m.schedule.period.count();
    auto it = next_due_.find(id);
    if (it == next_due_.end()) {
      kept[id] = now + period;
      continue;
    }
    Millis due = it->second;
    if (now >= due) {
      out.push_back(Trigger::interval(id));
      due += period * ((now - due) / period + 1);
    }
    kept[id] = due;
  }
  next_due_ = std::move(kept);
  return out;
}

std::optional<Millis> Scheduler::next_due(const std::string& instance) const {
  std::lock_guard lock(mutex_);
  auto it = next_due_.find(instance);
  if (it == next_due_.end()) return std::nullopt;
  return it->second;
}

void Scheduler::invalidate_warm() {
  std::vector<std::shared_ptr<Worker>> workers;
  {
    std::lock_guard lock(mutex_);
    for (auto& s : slots_) {
      s->warm.reset();
      workers.push_back(s->worker);
    }
  }
  for (auto& w : workers) w->cancel_warm();
  idle_cv_.notify_all();
}

std::size_t Scheduler::queue_depth() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::vector<Trigger> Scheduler::queued() const {
  std::lock_guard lock(mutex_);
  std::vector<Trigger> out;
  for (const auto& i : queue_) out.push_back(i.trigger);
  return out;
}

std::vector<AttemptRecord> Scheduler::attempts() const {
  std::lock_guard lock(mutex_);
  return attempt_log_;
}

std::vector<Completion> Scheduler::completions() const {
  std::lock_guard lock(mutex_);
  return completions_;
}

void Scheduler::on_completion(std::function<void(const Completion&)> callback) {
  std::lock_guard lock(mutex_);
  callbacks_.push_back(std::move(callback));
}

Json Scheduler::metrics() const {
  std::lock_guard lock(mutex_);
  Json workers = Json::array();
  for (const auto& s : slots_) {
    auto state = s->worker->state();
    workers.push_back({{"id", s->worker->id()},
                       {"state", state == WorkerState::busy      ? "busy"
                                 : state == WorkerState::warming ? "warming"
                                                                 : "idle"},
                       {"cached", s->worker->cached()},
                       {"cache_bytes", s->worker->cache_bytes()}});
  }
  Json hist = Json::object();
  for (const auto& [inst, counts] : attempt_hist_) {
    Json h = Json::object();
    for (const auto& [k, n] : counts) h[std::to_string(k)] = n;
    hist[inst] = h;
  }
  std::uint64_t completed = 0, failed = 0, exhausted = 0;
  for (const auto& c : completions_) {
    if (c.outcome == Completion::Outcome::completed) ++completed;
    if (c.outcome == Completion::Outcome::failed) ++failed;
    if (c.outcome == Completion::Outcome::exhausted) ++exhausted;
  }
  auto& t = host_.tracker();
  const auto hits = t.hits();
  const auto lookups = hits + t.transfers() + t.retransfers();
  return {{"queue_depth", queue_.size()},
          {"workers", workers},
          {"attempts", hist},
          {"completed", completed},
          {"failed", failed},
          {"exhausted", exhausted},
          {"warm_starts", warm_starts_},
          {"warm_resumes", warm_resumes_},
          {"cache",
           {{"hits", hits},
            {"transfers", t.transfers()},
            {"retransfers", t.retransfers()},
            {"bytes_sent", t.bytes_sent()},
            {"hit_rate", lookups == 0 ? 0.0 : static_cast<double>(hits) / lookups}}},
          {"policy", policy_.to_json()}};
}

}  // namespace karl
