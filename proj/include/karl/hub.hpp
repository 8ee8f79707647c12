#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "karl/audit.hpp"
#include "karl/data_store.hpp"
#include "karl/enforcement.hpp"
#include "karl/exit_policy.hpp"
#include "karl/graph.hpp"
#include "karl/host.hpp"
#include "karl/package.hpp"
#include "karl/runtime.hpp"
#include "karl/scheduler.hpp"
#include "karl/sim.hpp"

namespace karl {

struct HubConfig {
  std::string listen_host = "127.0.0.1";
  /// 0 picks an ephemeral port.
  int listen_port = 8420;
  std::optional<std::filesystem::path> data_dir;
  int workers = 2;
  std::uint64_t worker_cache_bytes = 256ull << 20;
  std::size_t default_quota = 0;
  std::map<std::string, std::size_t> quotas;
  PlacementPolicy policy;
  std::string admin_token = "karl-admin";
  /// `fake` for the in-process fake internet, `loopback:<port>` to send
  /// module traffic to a fake internet served over HTTP.
  std::string internet = "fake";
  Duration tick_period{1000};
  bool sync = false;
  /// Seeds device token generation; 0 draws from the OS.
  std::uint64_t seed = 0;
  /// Module package archives loaded next to the reference modules.
  std::vector<std::filesystem::path> packages;

  static HubConfig from_json(const Json& j);
  Json to_json() const;
};

/// Reads `file` (or $KARL_CONFIG when unset) as JSON; a data-dir override
/// wins over the file. Missing both gives the defaults.
HubConfig load_hub_config(const std::optional<std::filesystem::path>& file,
                          const std::optional<std::filesystem::path>& data_dir);

struct Registration {
  enum class Kind { device, link };
  enum class Status { pending, approved, rejected };

  std::string id;
  Kind kind = Kind::device;
  std::string device_id;
  DataflowGraph fragment;
  Edge edge;
  Status status = Status::pending;
  /// Permission texts the proposal adds, for review.
  std::vector<std::string> permissions;
  /// Only set on the response to the registering device.
  std::string token;

  Json to_json(bool with_fragment = false) const;
};

std::string_view to_string(Registration::Status s);

struct DecisionRequest {
  UserDecisions decisions;
  bool reject = false;
};

struct ChangeResult {
  std::uint64_t version = 0;
  std::vector<Conflict> conflicts;
  std::vector<SacrificedPermission> sacrificed;
  Json to_json() const;
};

/// Everything the journal determines. The live effective graph is
/// enforce(base, decisions, policies) over this state.
struct HubState {
  std::map<std::string, Registration> registrations;
  DataflowGraph base;
  UserDecisions decisions;
  std::map<std::string, ExitPolicy> policies;
  std::map<std::string, std::string> tokens;
  std::uint64_t version = 0;
  std::uint64_t next_registration = 1;
};

/// One fold step. Throws when the event does not apply to `state`.
HubState apply_event(HubState state, const Json& event);
EffectiveGraph effective_of(const HubState& state);

/// Append-only JSONL file of hub events; in memory when no path is given.
class Journal {
 public:
  explicit Journal(std::optional<std::filesystem::path> file = std::nullopt, bool sync = false);
  ~Journal();
  std::vector<Json> load() const;
  void append(const Json& event);

 private:
  std::optional<std::filesystem::path> file_;
  bool sync_;
  int fd_ = -1;
  std::vector<Json> memory_;
};

/// Bytes pushed to a device input, as seen by the polling device.
struct InputEntry {
  std::string port;
  Entry entry;
};

class Hub {
 public:
  /// `transport` overrides the configured internet when given.
  Hub(HubConfig config, Clock& clock, NetworkTransport* transport = nullptr);
  ~Hub();
  Hub(const Hub&) = delete;
  Hub& operator=(const Hub&) = delete;

  // Registration and review.
  /// Body: {"fragment": {...}} with exactly one device. Throws
  /// ValidationFailure, DuplicateDevice.
  Registration register_device(const Json& body);
  Registration register_fragment(const DataflowGraph& fragment);
  Registration propose_link(const Edge& edge);
  /// Body: {"src": tag, "dst": tag, "stateful": bool}.
  Registration propose_link(const Json& body);
  std::vector<Registration> registrations() const;
  Registration registration(const std::string& id) const;
  /// Throws UnknownRegistration, IncompleteDecisions, InvalidArgument.
  ChangeResult decide(const std::string& id, const DecisionRequest& request);
  /// Changes verdicts on already merged permissions.
  ChangeResult revise(const UserDecisions& decisions);

  // Exit policies.
  ChangeResult set_policy(const std::string& tag, const std::string& expr);
  ChangeResult remove_policy(const std::string& tag);
  std::vector<ExitPolicy> policies() const;

  // Views.
  std::shared_ptr<const EffectiveGraph> effective() const;
  std::uint64_t version() const;
  /// {"version", "base", "overlay", "graph", "decisions", "conflicts", "sacrificed"}
  Json graph_json() const;
  /// Merged permissions with index, text, verdict.
  Json permissions_json() const;
  HubState state() const;

  // Devices.
  std::map<std::string, std::uint64_t> device_push(const std::string& device,
                                                   const std::string& token,
                                                   const std::string& port, Bytes payload);
  /// Entries on the device's inputs past each cursor (port → last seen id),
  /// waiting up to `timeout` for the first one.
  std::vector<InputEntry> device_poll(const std::string& device, const std::string& token,
                                      const std::map<std::string, std::uint64_t>& cursor,
                                      Duration timeout);

  // Karl apps.
  Json app(const std::string& device) const;
  std::vector<Entry> app_read(const std::string& device, const std::string& tag, std::size_t n);
  std::map<std::string, std::uint64_t> app_push(const std::string& device, const std::string& tag,
                                                Bytes payload);
  /// Manual trigger; with `app_device` the instance must be in its bindings.
  std::size_t spawn(const std::string& instance, const std::optional<std::string>& app_device,
                    const std::string& user = {});

  // Admin.
  /// Throws AuthFailure.
  void check_admin(const std::string& token) const;
  std::vector<AuditRecord> audit(const AuditQuery& query) const;
  Json metrics() const;

  // Runtime.
  /// Enqueues interval triggers due at the clock's now.
  std::size_t tick();
  void start_ticker();
  void stop_ticker();

  const HubConfig& config() const { return config_; }
  Clock& clock() { return clock_; }
  Scheduler& scheduler() { return *scheduler_; }
  DataStore& store() { return *store_; }
  AuditLog& audit_log() { return *audit_; }
  PackageCatalog& catalog() { return catalog_; }
  ModuleHost& host() { return *host_; }
  Broker& broker() { return *broker_; }
  /// Null when traffic goes to an external transport.
  sim::FakeInternet* internet() { return internet_.get(); }

 private:
  ChangeResult commit(HubState next, const Json& event);
  void install(const HubState& state);
  std::string new_token();
  const DeviceDescriptor& approved_device(const HubState& s, const std::string& device) const;
  void check_token(const std::string& device, const std::string& token) const;
  std::vector<std::string> review_list(const DataflowGraph& before,
                                       const DataflowGraph& after) const;

  HubConfig config_;
  Clock& clock_;
  std::unique_ptr<sim::FakeInternet> internet_;
  std::unique_ptr<NetworkTransport> owned_transport_;
  NetworkTransport* transport_ = nullptr;
  std::unique_ptr<DataStore> store_;
  std::unique_ptr<AuditLog> audit_;
  PackageCatalog catalog_;
  std::unique_ptr<Broker> broker_;
  std::unique_ptr<ModuleHost> host_;
  std::unique_ptr<Journal> journal_;

  mutable std::mutex mutex_;  // the single writer of HubState
  HubState state_;
  std::shared_ptr<const EffectiveGraph> effective_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> provenance_;
  std::mt19937_64 rng_;

  std::unique_ptr<Scheduler> scheduler_;

  std::mutex ticker_mutex_;
  std::condition_variable ticker_cv_;
  std::thread ticker_;
  bool ticker_stop_ = false;
};

}  // namespace karl
