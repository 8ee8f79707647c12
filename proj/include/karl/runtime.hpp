#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "karl/audit.hpp"
#include "karl/data_store.hpp"
#include "karl/graph.hpp"
#include "karl/network.hpp"

namespace karl {

struct Trigger {
  enum class Cause { event, interval_tick, manual };

  std::string instance_id;
  Cause cause = Cause::manual;
  /// For events: the input-node tag that received the entry and its id.
  std::string tag;
  std::uint64_t entry_id = 0;
  /// For manual spawns: who asked.
  std::string user;

  static Trigger event(std::string instance, std::string tag, std::uint64_t id) {
    return {std::move(instance), Cause::event, std::move(tag), id, {}};
  }
  static Trigger interval(std::string instance) {
    return {std::move(instance), Cause::interval_tick, {}, 0, {}};
  }
  static Trigger manual(std::string instance, std::string user = {}) {
    return {std::move(instance), Cause::manual, {}, 0, std::move(user)};
  }

  Json to_json() const;
  bool operator==(const Trigger&) const = default;
};

std::string_view to_string(Trigger::Cause c);

enum class ReadMode { event_only, ranged };

struct PortRead {
  std::string tag;
  ReadMode mode = ReadMode::event_only;
  bool operator==(const PortRead&) const = default;
};

/// A consumer spawned per entry pushed onto one of its stateless inputs.
struct Consumer {
  std::string instance;
  std::string tag;  // the consumer's input-node tag
  bool operator==(const Consumer&) const = default;
  auto operator<=>(const Consumer&) const = default;
};

/// Where a push on one output lands and whom it wakes.
struct OutputRoute {
  std::set<std::string> tags;
  std::vector<Consumer> consumers;
  bool operator==(const OutputRoute&) const = default;
};

/// Consumers are on_push modules behind a stateless edge.
OutputRoute route_for_output(const DataflowGraph& graph, std::string_view owner,
                             std::string_view port);

struct ExecutionContext {
  std::string instance_id;
  Trigger trigger;
  std::uint64_t graph_version = 0;
  std::map<std::string, PortRead> reads;
  std::map<std::string, OutputRoute> pushes;
  std::set<std::string> domains;

  Json to_json() const;
  bool operator==(const ExecutionContext&) const = default;
};

/// Pure function of its arguments. Each wired input maps to the input-node
/// tag; the mode is ranged only when every edge into that port is stateful.
/// Throws UnknownInstance.
ExecutionContext build_context(const DataflowGraph& effective, std::string_view instance,
                               const Trigger& trigger, std::uint64_t graph_version = 0);

/// Running totals of everything that crossed the broker.
struct MediationCounters {
  std::atomic<std::uint64_t> reads{0};
  std::atomic<std::uint64_t> read_bytes{0};
  std::atomic<std::uint64_t> pushes{0};
  std::atomic<std::uint64_t> push_bytes{0};
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> request_bytes{0};
  std::atomic<std::uint64_t> response_bytes{0};
  std::atomic<std::uint64_t> denials{0};
};

/// The mediation boundary. Every module call is checked against the
/// ExecutionContext it runs under. Safe for concurrent use.
class Broker {
 public:
  using TriggerSink = std::function<void(const Trigger&)>;
  /// Permission texts that justify `instance` reaching `domain`.
  using Provenance =
      std::function<std::vector<std::string>(const std::string& instance, const std::string& domain)>;

  Broker(DataStore& store, NetworkTransport& transport, AuditLog& audit, Clock& clock);

  void set_trigger_sink(TriggerSink sink);
  void set_provenance(Provenance provenance);

  std::vector<Entry> read(const ExecutionContext& ctx, std::string_view port, Millis lower,
                          Millis upper);
  std::vector<Entry> read_last_n(const ExecutionContext& ctx, std::string_view port,
                                 std::size_t n);
  Entry read_event(const ExecutionContext& ctx, std::string_view port);
  std::map<std::string, std::uint64_t> push(const ExecutionContext& ctx, std::string_view port,
                                            Bytes payload);
  NetResponse network(const ExecutionContext& ctx, std::string_view domain,
                      const NetRequest& request);

  /// Data-plane push from a device or app: appends under every routed tag
  /// with one timestamp and wakes the consumers.
  std::map<std::string, std::uint64_t> publish(const OutputRoute& route, Bytes payload);

  const MediationCounters& counters() const { return counters_; }
  DataStore& store() { return store_; }
  Clock& clock() { return clock_; }

 private:
  const PortRead& port_read(const ExecutionContext& ctx, std::string_view port);
  [[noreturn]] void deny(const ExecutionContext& ctx, std::string message, std::string detail,
                         std::string domain = {});
  void notify(const std::vector<Consumer>& consumers,
              const std::map<std::string, std::uint64_t>& ids);

  DataStore& store_;
  NetworkTransport& transport_;
  AuditLog& audit_;
  Clock& clock_;
  TriggerSink sink_;
  Provenance provenance_;
  std::mutex hooks_mutex_;
  MediationCounters counters_;
};

/// The five calls a module may make, plus its clock.
class ModuleApi {
 public:
  virtual ~ModuleApi() = default;
  virtual std::vector<Entry> read(std::string_view port, Millis lower, Millis upper) = 0;
  virtual std::vector<Entry> read_last_n(std::string_view port, std::size_t n) = 0;
  virtual Entry read_event(std::string_view port) = 0;
  virtual std::map<std::string, std::uint64_t> push(std::string_view port, Bytes payload) = 0;
  virtual NetResponse network(std::string_view domain, const NetRequest& request) = 0;
  virtual Clock& clock() = 0;
};

/// One execution's worth of module code. A fresh object is built per spawn.
class ModuleProgram {
 public:
  virtual ~ModuleProgram() = default;
  virtual void run(ModuleApi& api) = 0;
  /// Asks a running program to stop; called from another thread.
  virtual void cancel() {}
};

struct ProgramSpec {
  const ModuleInstance& instance;
  /// Unpacked package contents on the worker, when it keeps them on disk.
  std::filesystem::path package_dir;
};

using ProgramFactory = std::function<std::unique_ptr<ModuleProgram>(const ProgramSpec&)>;

/// Adapts a plain callable into a program.
class FunctionProgram final : public ModuleProgram {
 public:
  explicit FunctionProgram(std::function<void(ModuleApi&)> fn) : fn_(std::move(fn)) {}
  void run(ModuleApi& api) override { fn_(api); }

 private:
  std::function<void(ModuleApi&)> fn_;
};

}  // namespace karl
