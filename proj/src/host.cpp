#include "karl/host.hpp"

#include "karl/process_program.hpp"

namespace karl {

ModuleHost::ModuleHost(Broker& broker, AuditLog& audit, PackageCatalog& catalog, Clock& clock)
    : broker_(broker), audit_(audit), catalog_(catalog), clock_(clock) {}

void ModuleHost::set_graph(DataflowGraph graph, std::uint64_t version) {
  auto& store = broker_.store();
  for (const auto& [id, dev] : graph.devices) {
    for (const auto& p : dev.outputs) store.declare(device_output(id, p.name).tag());
    for (const auto& p : dev.inputs) store.declare(device_input(id, p.name).tag());
  }
  for (const auto& [id, m] : graph.modules) {
    for (const auto& p : m.manifest.outputs) store.declare(module_output(id, p.name).tag());
    for (const auto& p : m.manifest.inputs) store.declare(module_input(id, p.name).tag());
  }
  std::lock_guard lock(mutex_);
  graph_ = std::make_shared<const DataflowGraph>(std::move(graph));
  version_ = version;
}

std::shared_ptr<const DataflowGraph> ModuleHost::graph() const {
  std::lock_guard lock(mutex_);
  return graph_;
}

std::uint64_t ModuleHost::version() const {
  std::lock_guard lock(mutex_);
  return version_;
}

void ModuleHost::register_program(std::string entrypoint, ProgramFactory factory) {
  std::lock_guard lock(mutex_);
  programs_[std::move(entrypoint)] = std::move(factory);
}

ProgramFactory ModuleHost::program_for(const ModuleManifest& manifest) const {
  std::lock_guard lock(mutex_);
  auto it = programs_.find(manifest.entrypoint);
  if (it != programs_.end()) return it->second;
  return ProcessProgram::factory();
}

ModuleInstance ModuleHost::instance(std::string_view id) const {
  auto g = graph();
  const auto* m = g->find_module(id);
  if (m == nullptr)
    throw Error(Errc::UnknownInstance, "no module instance '" + std::string(id) + "'",
                std::string(id));
  return *m;
}

Job ModuleHost::prepare(const Trigger& trigger) const {
  std::shared_ptr<const DataflowGraph> g;
  std::uint64_t version;
  {
    std::lock_guard lock(mutex_);
    g = graph_;
    version = version_;
  }
  auto ctx = build_context(*g, trigger.instance_id, trigger, version);
  const auto& inst = *g->find_module(trigger.instance_id);
  return {trigger, inst, std::move(ctx), program_for(inst.manifest)};
}

CacheResult ModuleHost::ensure_cached(Worker& worker, const ModuleManifest& manifest) {
  return tracker_.ensure_cached(worker, manifest, catalog_);
}

Duration ModuleHost::cap_for(const ModuleInstance& instance) const {
  auto it = instance.config.find("timeout_ms");
  if (it == instance.config.end()) return kDefaultModuleTimeout;
  try {
    return Duration{std::stoll(it->second)};
  } catch (const std::exception&) {
    return kDefaultModuleTimeout;
  }
}

}  // namespace karl
