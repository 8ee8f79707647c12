#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "karl/package.hpp"
#include "karl/runtime.hpp"
#include "karl/worker.hpp"

namespace karl {

/// Default wall-clock cap per execution; `timeout_ms` in an instance's
/// config overrides it.
inline constexpr Duration kDefaultModuleTimeout{30000};

/// Everything the scheduler needs to turn a trigger into a runnable job:
/// the current effective graph, the package catalog and program lookup.
class ModuleHost {
 public:
  ModuleHost(Broker& broker, AuditLog& audit, PackageCatalog& catalog, Clock& clock);

  /// Installs a new effective graph. Declares every tag it can produce so
  /// reads of not-yet-written tags return empty.
  void set_graph(DataflowGraph graph, std::uint64_t version);
  std::shared_ptr<const DataflowGraph> graph() const;
  std::uint64_t version() const;

  /// In-process programs keyed by manifest entrypoint. Entrypoints without
  /// a registered program run as packaged executables.
  void register_program(std::string entrypoint, ProgramFactory factory);
  ProgramFactory program_for(const ModuleManifest& manifest) const;

  /// Throws UnknownInstance.
  Job prepare(const Trigger& trigger) const;
  ModuleInstance instance(std::string_view id) const;
  CacheResult ensure_cached(Worker& worker, const ModuleManifest& manifest);
  Duration cap_for(const ModuleInstance& instance) const;

  Broker& broker() { return broker_; }
  AuditLog& audit() { return audit_; }
  PackageCatalog& catalog() { return catalog_; }
  PackageTracker& tracker() { return tracker_; }
  Clock& clock() { return clock_; }

 private:
  Broker& broker_;
  AuditLog& audit_;
  PackageCatalog& catalog_;
  Clock& clock_;
  PackageTracker tracker_;
  mutable std::mutex mutex_;
  std::shared_ptr<const DataflowGraph> graph_ = std::make_shared<DataflowGraph>();
  std::uint64_t version_ = 0;
  std::map<std::string, ProgramFactory, std::less<>> programs_;
};

}  // namespace karl
