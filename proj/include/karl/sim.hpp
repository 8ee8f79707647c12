#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "karl/graph.hpp"
#include "karl/host.hpp"
#include "karl/network.hpp"
#include "karl/package.hpp"

namespace karl::sim {

// ---- reference modules ----

/// Names of the reference modules, prio last.
const std::vector<std::string>& reference_module_names();

/// Manifest (without package) of a reference module. Throws InvalidArgument.
ModuleManifest reference_manifest(const std::string& name);

struct CatalogOptions {
  /// Stub package bytes per reference module; scaled-down package sizes
  /// when unset.
  std::map<std::string, std::uint64_t> package_bytes;
  std::uint64_t seed = 7;
};

/// Packages every reference module into `catalog`.
void install_reference_packages(PackageCatalog& catalog, const CatalogOptions& options = {});

/// Registers the in-process program behind every reference module.
void register_reference_programs(ModuleHost& host);

/// Program for one reference module. Config keys honoured by all of them:
/// `init_ms` (before the first call) and `compute_ms` (after it).
ProgramFactory reference_program(const std::string& name);

// ---- payloads ----

/// `KARLPNG:<label>\n` followed by seeded filler up to `size` bytes.
Bytes image_payload(const std::string& label, std::uint64_t seed, std::size_t size = 156000);
/// `KARLWAV:<utterance>\n` followed by seeded filler.
Bytes speech_payload(const std::string& utterance, std::uint64_t seed, std::size_t size = 172000);
/// The text after the `KARL???:` prefix up to the first newline.
std::string payload_label(std::string_view payload);
/// Intent JSON the speech stub derives from an utterance, or nullopt.
std::optional<std::pair<std::string, std::string>> intent_for(const std::string& utterance);

// ---- fleet ----

DataflowGraph light_fragment(const PackageCatalog& catalog);
DataflowGraph speaker_fragment(const PackageCatalog& catalog);
DataflowGraph camera_fragment(const PackageCatalog& catalog);
/// Camera with training data anonymised through boolean before statistics.
DataflowGraph camera_anonymized_fragment(const PackageCatalog& catalog);
/// Camera with training data aggregated through prio.
DataflowGraph camera_prio_fragment(const PackageCatalog& catalog);
DataflowGraph occupancy_fragment();

/// speech-controlled light: light_switch.state → #light.state.
Edge speech_light_link();
/// occupancy_sensor.at_home → boolean.condition (stateful).
Edge occupancy_link();

/// Fragment by name: light, speaker, camera, camera_anonymized, camera_prio,
/// occupancy_sensor. Throws InvalidArgument.
DataflowGraph fragment(const std::string& name, const PackageCatalog& catalog);
std::vector<std::string> fragment_names();

// ---- fake internet ----

struct RecordedRequest {
  Millis timestamp = 0;
  std::string domain;
  std::string method;
  std::string path;
  std::uint64_t body_bytes = 0;
};

/// Canned weather, firmware and statistics endpoints with a recorder of
/// everything that reached them.
class FakeInternet {
 public:
  explicit FakeInternet(Clock& clock);

  NetResponse handle(const std::string& domain, const NetRequest& request);
  bool serves(const std::string& domain) const;

  std::vector<RecordedRequest> requests() const;
  std::size_t count(const std::string& domain) const;
  /// Requests to `domain` or any of its subdomains.
  std::size_t count_under(const std::string& domain) const;
  void clear();

 private:
  Clock& clock_;
  mutable std::mutex mutex_;
  std::vector<RecordedRequest> log_;
};

/// In-process transport straight into a FakeInternet.
class FakeInternetTransport final : public NetworkTransport {
 public:
  explicit FakeInternetTransport(FakeInternet& internet) : internet_(internet) {}
  NetResponse send(const std::string& domain, const NetRequest& request) override;

 private:
  FakeInternet& internet_;
};

/// Serves a FakeInternet over loopback HTTP, dispatching on the Host header.
class FakeInternetServer {
 public:
  explicit FakeInternetServer(FakeInternet& internet);
  ~FakeInternetServer();
  /// Binds 127.0.0.1 on an ephemeral port and serves in the background.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// Sends every request to one loopback server, naming the domain in Host.
class LoopbackTransport final : public NetworkTransport {
 public:
  LoopbackTransport(std::string host, int port) : host_(std::move(host)), port_(port) {}
  NetResponse send(const std::string& domain, const NetRequest& request) override;

 private:
  std::string host_;
  int port_;
};

// ---- simulated devices ----

/// What a simulated device needs from the hub.
class DeviceLink {
 public:
  virtual ~DeviceLink() = default;
  virtual void push(const std::string& port, const Bytes& payload) = 0;
  /// Entries on `#device.port` with id greater than `after`.
  virtual std::vector<Entry> poll(const std::string& port, std::uint64_t after) = 0;
};

struct Emitter {
  std::string port;
  Duration period{0};
  std::function<Bytes(std::uint64_t n)> payload;
};

/// A device that pushes on a fixed period and applies actuations it polls.
class SimDevice {
 public:
  SimDevice(std::string id, std::vector<Emitter> emitters, std::vector<std::string> inputs);

  const std::string& id() const { return id_; }
  /// Emits everything due at `now`; returns the number of pushes.
  std::size_t step(DeviceLink& link, Millis now);
  /// Polls each input and applies new entries; returns how many arrived.
  std::size_t poll(DeviceLink& link);

  /// Last payload applied per input port.
  std::map<std::string, Bytes> state() const;
  std::uint64_t emitted() const { return emitted_; }

 private:
  std::string id_;
  std::vector<Emitter> emitters_;
  std::vector<std::string> inputs_;
  std::map<std::string, Millis> next_;
  std::map<std::string, std::uint64_t> cursors_;
  std::map<std::string, Bytes> state_;
  std::uint64_t emitted_ = 0;
};

/// Camera emitting motion frames labelled by `label(n)`.
SimDevice camera_device(Duration period, std::function<std::string(std::uint64_t)> label,
                        std::uint64_t seed = 1);
/// Speaker emitting utterances chosen by `utterance(n)`.
SimDevice speaker_device(Duration period, std::function<std::string(std::uint64_t)> utterance,
                         std::uint64_t seed = 2);
SimDevice light_device();

}  // namespace karl::sim
