#include "karl/worker.hpp"

#include <fstream>

#include <sys/stat.h>

namespace karl {

std::string_view to_string(AttemptResult::Status s) {
  switch (s) {
    case AttemptResult::Status::completed: return "completed";
    case AttemptResult::Status::failed: return "failed";
    case AttemptResult::Status::timed_out: return "timed_out";
  }
  return "unknown";
}

std::string_view to_string(CacheResult r) {
  switch (r) {
    case CacheResult::hit: return "hit";
    case CacheResult::transferred: return "transferred";
    case CacheResult::retransferred: return "retransferred";
  }
  return "unknown";
}

// ---- GatedApi ----

void GatedApi::bind(ExecutionContext ctx) {
  {
    std::lock_guard lock(mutex_);
    ctx_ = std::move(ctx);
  }
  cv_.notify_all();
}

void GatedApi::cancel() {
  {
    std::lock_guard lock(mutex_);
    cancelled_ = true;
  }
  cv_.notify_all();
}

bool GatedApi::cancelled() const {
  std::lock_guard lock(mutex_);
  return cancelled_;
}

std::optional<Millis> GatedApi::first_call_at() const {
  std::lock_guard lock(mutex_);
  return first_call_;
}

const ExecutionContext& GatedApi::await() {
  std::unique_lock lock(mutex_);
  if (!first_call_) {
    first_call_ = clock_.now_ms();
    cv_.notify_all();
  }
  cv_.wait(lock, [&] { return ctx_.has_value() || cancelled_; });
  if (cancelled_) throw Error(Errc::Cancelled, "execution cancelled");
  return *ctx_;
}

std::vector<Entry> GatedApi::read(std::string_view port, Millis lower, Millis upper) {
  return broker_.read(await(), port, lower, upper);
}

std::vector<Entry> GatedApi::read_last_n(std::string_view port, std::size_t n) {
  return broker_.read_last_n(await(), port, n);
}

Entry GatedApi::read_event(std::string_view port) { return broker_.read_event(await(), port); }

std::map<std::string, std::uint64_t> GatedApi::push(std::string_view port, Bytes payload) {
  return broker_.push(await(), port, std::move(payload));
}

NetResponse GatedApi::network(std::string_view domain, const NetRequest& request) {
  return broker_.network(await(), domain, request);
}

// ---- Worker cache ----

Worker::Worker(int id, std::uint64_t cache_budget_bytes,
               std::optional<std::filesystem::path> cache_root)
    : id_(id), budget_(cache_budget_bytes), cache_root_(std::move(cache_root)) {
  if (cache_root_) std::filesystem::create_directories(*cache_root_);
}

Worker::~Worker() = default;

bool Worker::probe(const std::string& hash) const {
  std::lock_guard lock(cache_mutex_);
  return cache_.contains(hash);
}

std::filesystem::path Worker::package_dir(const std::string& hash) const {
  if (!cache_root_) return {};
  return *cache_root_ / hash;
}

void Worker::install(const std::string& hash, const Bytes& blob) {
  if (sha256_hex(blob) != hash)
    throw Error(Errc::TransferFailure, "package blob does not match hash " + hash);
  auto contents = unpack(blob);
  const std::uint64_t size = blob.size();
  if (size > budget_)
    throw Error(Errc::TransferFailure, "package of " + std::to_string(size) +
                                           " bytes exceeds the worker cache budget");

  std::lock_guard lock(cache_mutex_);
  received_ += size;
  if (auto it = cache_.find(hash); it != cache_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.lru);
    return;
  }
  while (cache_bytes_ + size > budget_ && !lru_.empty()) {
    auto victim = lru_.back();
    lru_.pop_back();
    cache_bytes_ -= cache_[victim].size;
    cache_.erase(victim);
    if (cache_root_) std::filesystem::remove_all(*cache_root_ / victim);
  }
  if (cache_root_) {
    auto dir = *cache_root_ / hash;
    std::filesystem::create_directories(dir);
    for (const auto& [name, data] : contents.files) {
      std::filesystem::path rel(name);
      if (rel.is_absolute() || name.find("..") != std::string::npos)
        throw Error(Errc::TransferFailure, "package file name '" + name + "' escapes its directory");
      auto path = dir / rel;
      std::filesystem::create_directories(path.parent_path());
      std::ofstream(path, std::ios::binary) << data;
      if (name == contents.manifest.entrypoint) ::chmod(path.c_str(), 0755);
    }
  }
  lru_.push_front(hash);
  cache_[hash] = {size, lru_.begin()};
  cache_bytes_ += size;
}

void Worker::evict(const std::string& hash) {
  std::lock_guard lock(cache_mutex_);
  auto it = cache_.find(hash);
  if (it == cache_.end()) return;
  cache_bytes_ -= it->second.size;
  lru_.erase(it->second.lru);
  cache_.erase(it);
  if (cache_root_) std::filesystem::remove_all(*cache_root_ / hash);
}

void Worker::touch(const std::string& hash) {
  std::lock_guard lock(cache_mutex_);
  auto it = cache_.find(hash);
  if (it != cache_.end()) lru_.splice(lru_.begin(), lru_, it->second.lru);
}

std::vector<std::string> Worker::cached() const {
  std::lock_guard lock(cache_mutex_);
  return {lru_.begin(), lru_.end()};
}

std::uint64_t Worker::cache_bytes() const {
  std::lock_guard lock(cache_mutex_);
  return cache_bytes_;
}

std::uint64_t Worker::bytes_received() const {
  std::lock_guard lock(cache_mutex_);
  return received_;
}

void Worker::warm_start(const ModuleInstance&, ProgramFactory) {}

AttemptResult Worker::resume(Job job, Duration timeout) { return run(std::move(job), timeout); }

// ---- SandboxWorker ----

struct SandboxWorker::Execution {
  ModuleInstance instance;
  std::shared_ptr<GatedApi> api;
  std::thread thread;

  std::mutex mutex;
  std::condition_variable cv;
  ModuleProgram* program = nullptr;
  bool done = false;
  AttemptResult::Status status = AttemptResult::Status::completed;
  std::string error;
  Millis started = 0;
  Millis finished = 0;

  void cancel() {
    api->cancel();
    std::lock_guard lock(mutex);
    if (program) program->cancel();
  }
};

SandboxWorker::SandboxWorker(int id, Broker& broker, Clock& clock,
                             std::uint64_t cache_budget_bytes,
                             std::optional<std::filesystem::path> cache_root)
    : Worker(id, cache_budget_bytes, std::move(cache_root)), broker_(broker), clock_(clock) {}

SandboxWorker::~SandboxWorker() {
  cancel_warm();
  std::lock_guard lock(mutex_);
  for (auto& ex : stale_) {
    ex->cancel();
    if (ex->thread.joinable()) ex->thread.join();
  }
}

std::shared_ptr<SandboxWorker::Execution> SandboxWorker::launch(
    const ModuleInstance& instance, const ProgramFactory& factory,
    std::optional<ExecutionContext> ctx) {
  auto ex = std::make_shared<Execution>();
  ex->instance = instance;
  ex->api = std::make_shared<GatedApi>(broker_, clock_);
  if (ctx) ex->api->bind(std::move(*ctx));
  auto dir = package_dir(instance.manifest.package.hash);
  ex->thread = std::thread([this, ex, factory, dir] {
    auto started = clock_.now_ms();
    AttemptResult::Status status = AttemptResult::Status::completed;
    std::string error;
    try {
      if (!factory) throw Error(Errc::ExecutionFailure, "no program for " + ex->instance.id);
      auto program = factory(ProgramSpec{ex->instance, dir});
      {
        std::lock_guard lock(ex->mutex);
        ex->program = program.get();
      }
      if (ex->api->cancelled()) throw Error(Errc::Cancelled, "execution cancelled");
      program->run(*ex->api);
      std::lock_guard lock(ex->mutex);
      ex->program = nullptr;
    } catch (const std::exception& e) {
      std::lock_guard lock(ex->mutex);
      ex->program = nullptr;
      status = AttemptResult::Status::failed;
      error = e.what();
    }
    std::lock_guard lock(ex->mutex);
    ex->started = started;
    ex->finished = clock_.now_ms();
    ex->status = status;
    ex->error = std::move(error);
    ex->done = true;
    ex->cv.notify_all();
  });
  return ex;
}

// `begin` is read before the program can run, so a simulated clock it
// advances is charged to this attempt.
AttemptResult SandboxWorker::finish(const std::shared_ptr<Execution>& ex, Duration timeout,
                                    bool warm, Millis begin) {
  AttemptResult result;
  result.warm = warm;
  result.started = begin;
  std::unique_lock lock(ex->mutex);
  bool done = clock_.wait_for(lock, ex->cv, timeout, [&] { return ex->done; });
  if (!done) {
    lock.unlock();
    ex->cancel();
    std::lock_guard guard(mutex_);
    stale_.push_back(ex);
    result.status = AttemptResult::Status::timed_out;
    result.error = "module exceeded " + std::to_string(timeout.count()) + " ms";
    result.finished = clock_.now_ms();
    return result;
  }
  result.finished = ex->finished;
  result.status = ex->status;
  result.error = ex->error;
  lock.unlock();
  if (ex->thread.joinable()) ex->thread.join();

  auto first = ex->api->first_call_at();
  result.init_ms = (first ? *first : ex->finished) - ex->started;
  // Simulated clocks cannot interrupt a wait, so the limit is applied to the
  // elapsed simulated time once the program has returned.
  if (clock_.simulated() && result.finished - begin > timeout.count()) {
    result.status = AttemptResult::Status::timed_out;
    result.error = "module exceeded " + std::to_string(timeout.count()) + " ms";
  }
  return result;
}

void SandboxWorker::reap() {
  std::vector<std::shared_ptr<Execution>> stale;
  {
    std::lock_guard lock(mutex_);
    stale.swap(stale_);
  }
  for (auto& ex : stale)
    if (ex->thread.joinable()) ex->thread.join();
}

AttemptResult SandboxWorker::run(Job job, Duration timeout) {
  {
    std::unique_lock lock(mutex_);
    if (warm_ && warm_->instance.id == job.instance.id) {
      lock.unlock();
      return resume(std::move(job), timeout);
    }
  }
  cancel_warm();
  reap();
  {
    std::lock_guard lock(mutex_);
    state_ = WorkerState::busy;
  }
  const Millis begin = clock_.now_ms();
  auto ex = launch(job.instance, job.factory, std::move(job.ctx));
  auto result = finish(ex, timeout, false, begin);
  std::lock_guard lock(mutex_);
  state_ = WorkerState::idle;
  return result;
}

void SandboxWorker::warm_start(const ModuleInstance& instance, ProgramFactory factory) {
  cancel_warm();
  reap();
  std::lock_guard lock(mutex_);
  if (state_ == WorkerState::busy)
    throw Error(Errc::InvalidArgument, "worker " + std::to_string(id_) + " is busy");
  warm_ = launch(instance, factory, std::nullopt);
  state_ = WorkerState::warming;
}

AttemptResult SandboxWorker::resume(Job job, Duration timeout) {
  std::shared_ptr<Execution> ex;
  {
    std::lock_guard lock(mutex_);
    if (warm_) {
      if (warm_->instance.id != job.instance.id)
        throw Error(Errc::WarmMismatch, "worker " + std::to_string(id_) + " is warming " +
                                            warm_->instance.id + ", not " + job.instance.id);
      ex = std::move(warm_);
      warm_.reset();
      state_ = WorkerState::busy;
    }
  }
  if (!ex) return run(std::move(job), timeout);
  const Millis begin = clock_.now_ms();
  ex->api->bind(std::move(job.ctx));
  auto result = finish(ex, timeout, true, begin);
  std::lock_guard lock(mutex_);
  state_ = WorkerState::idle;
  return result;
}

void SandboxWorker::cancel_warm() {
  std::lock_guard lock(mutex_);
  if (!warm_) return;
  warm_->cancel();
  stale_.push_back(std::move(warm_));
  warm_.reset();
  if (state_ == WorkerState::warming) state_ = WorkerState::idle;
}

std::optional<std::string> SandboxWorker::warming() const {
  std::lock_guard lock(mutex_);
  if (!warm_) return std::nullopt;
  return warm_->instance.id;
}

bool SandboxWorker::warm_ready() const {
  std::shared_ptr<Execution> ex;
  {
    std::lock_guard lock(mutex_);
    ex = warm_;
  }
  if (!ex) return false;
  if (ex->api->first_call_at()) return true;
  std::lock_guard lock(ex->mutex);
  return ex->done;
}

WorkerState SandboxWorker::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

// ---- PackageTracker ----

CacheResult PackageTracker::ensure_cached(Worker& worker, const ModuleManifest& manifest,
                                          const PackageCatalog& catalog) {
  const auto& hash = manifest.package.hash;
  const std::pair key{worker.id(), hash};
  bool believed;
  {
    std::lock_guard lock(mutex_);
    believed = sent_.contains(key);
  }
  if (believed && worker.probe(hash)) {
    worker.touch(hash);
    std::lock_guard lock(mutex_);
    ++hits_;
    return CacheResult::hit;
  }
  auto blob = catalog.blob(hash);
  if (!blob) throw Error(Errc::TransferFailure, "no package blob for " + manifest.name);
  worker.install(hash, *blob);
  std::lock_guard lock(mutex_);
  sent_.insert(key);
  bytes_sent_ += blob->size();
  if (believed) {
    ++retransfers_;
    return CacheResult::retransferred;
  }
  ++transfers_;
  return CacheResult::transferred;
}

bool PackageTracker::believes_cached(int worker, const std::string& hash) const {
  std::lock_guard lock(mutex_);
  return sent_.contains({worker, hash});
}

std::uint64_t PackageTracker::bytes_sent() const {
  std::lock_guard lock(mutex_);
  return bytes_sent_;
}
std::uint64_t PackageTracker::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}
std::uint64_t PackageTracker::transfers() const {
  std::lock_guard lock(mutex_);
  return transfers_;
}
std::uint64_t PackageTracker::retransfers() const {
  std::lock_guard lock(mutex_);
  return retransfers_;
}

}  // namespace karl
