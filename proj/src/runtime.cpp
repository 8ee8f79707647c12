#include "karl/runtime.hpp"

#include <algorithm>

namespace karl {

std::string_view to_string(Trigger::Cause c) {
  switch (c) {
    case Trigger::Cause::event: return "event";
    case Trigger::Cause::interval_tick: return "interval_tick";
    case Trigger::Cause::manual: return "manual";
  }
  return "unknown";
}

Json Trigger::to_json() const {
  Json j{{"instance", instance_id}, {"cause", to_string(cause)}};
  if (cause == Cause::event) {
    j["tag"] = tag;
    j["entry_id"] = entry_id;
  }
  if (cause == Cause::manual && !user.empty()) j["user"] = user;
  return j;
}

Json ExecutionContext::to_json() const {
  Json reads_j = Json::object();
  for (const auto& [port, r] : reads)
    reads_j[port] = {{"tag", r.tag},
                     {"mode", r.mode == ReadMode::ranged ? "ranged" : "event_only"}};
  Json pushes_j = Json::object();
  for (const auto& [port, route] : pushes) {
    Json consumers = Json::array();
    for (const auto& c : route.consumers)
      consumers.push_back({{"instance", c.instance}, {"tag", c.tag}});
    pushes_j[port] = {{"tags", route.tags}, {"consumers", consumers}};
  }
  return {{"instance", instance_id},
          {"trigger", trigger.to_json()},
          {"graph_version", graph_version},
          {"reads", reads_j},
          {"pushes", pushes_j},
          {"domains", domains}};
}

OutputRoute route_for_output(const DataflowGraph& graph, std::string_view owner,
                             std::string_view port) {
  OutputRoute route;
  route.tags = tags_for_push(graph, owner, port);
  NodeId src = graph.find_module(owner) ? module_output(std::string(owner), std::string(port))
                                        : device_output(std::string(owner), std::string(port));
  for (const auto& e : graph.edges_from(src)) {
    if (!e.stateless() || e.dst.kind != PortKind::module_input) continue;
    const auto* m = graph.find_module(e.dst.owner);
    if (m == nullptr || m->schedule.kind != Schedule::Kind::on_push) continue;
    route.consumers.push_back({e.dst.owner, e.dst.tag()});
  }
  std::sort(route.consumers.begin(), route.consumers.end());
  route.consumers.erase(std::unique(route.consumers.begin(), route.consumers.end()),
                        route.consumers.end());
  return route;
}

ExecutionContext build_context(const DataflowGraph& effective, std::string_view instance,
                               const Trigger& trigger, std::uint64_t graph_version) {
  const auto* m = effective.find_module(instance);
  if (m == nullptr)
    throw Error(Errc::UnknownInstance, "no module instance '" + std::string(instance) + "'",
                std::string(instance));
  ExecutionContext ctx;
  ctx.instance_id = m->id;
  ctx.trigger = trigger;
  ctx.graph_version = graph_version;
  for (const auto& port : m->manifest.inputs) {
    auto node = module_input(m->id, port.name);
    bool wired = false;
    bool all_stateful = true;
    for (const auto& e : effective.edges) {
      if (e.dst != node) continue;
      wired = true;
      if (e.stateless()) all_stateful = false;
    }
    if (!wired) continue;
    ctx.reads[port.name] = {node.tag(), all_stateful ? ReadMode::ranged : ReadMode::event_only};
  }
  for (const auto& port : m->manifest.outputs)
    ctx.pushes[port.name] = route_for_output(effective, m->id, port.name);
  ctx.domains = m->network_grant;
  return ctx;
}

Broker::Broker(DataStore& store, NetworkTransport& transport, AuditLog& audit, Clock& clock)
    : store_(store), transport_(transport), audit_(audit), clock_(clock) {}

void Broker::set_trigger_sink(TriggerSink sink) {
  std::lock_guard lock(hooks_mutex_);
  sink_ = std::move(sink);
}

void Broker::set_provenance(Provenance provenance) {
  std::lock_guard lock(hooks_mutex_);
  provenance_ = std::move(provenance);
}

void Broker::deny(const ExecutionContext& ctx, std::string message, std::string detail,
                  std::string domain) {
  ++counters_.denials;
  AuditRecord r;
  r.kind = AuditRecord::Kind::denied;
  r.timestamp = clock_.now_ms();
  r.instance = ctx.instance_id;
  r.domain = std::move(domain);
  r.graph_version = ctx.graph_version;
  r.detail = "AccessDenied(" + detail + "): " + message;
  audit_.append(std::move(r));
  throw Error(Errc::AccessDenied, std::move(message), std::move(detail));
}

const PortRead& Broker::port_read(const ExecutionContext& ctx, std::string_view port) {
  auto it = ctx.reads.find(std::string(port));
  if (it == ctx.reads.end())
    deny(ctx, ctx.instance_id + " has no readable input '" + std::string(port) + "'", "port");
  return it->second;
}

namespace {

std::vector<Entry> read_or_empty(const DataStore& store, const std::function<std::vector<Entry>()>& f,
                                 const std::string& tag) {
  if (!store.has_tag(tag)) return {};
  return f();
}

std::uint64_t total_bytes(const std::vector<Entry>& entries) {
  std::uint64_t n = 0;
  for (const auto& e : entries) n += e.payload.size();
  return n;
}

}  // namespace

std::vector<Entry> Broker::read(const ExecutionContext& ctx, std::string_view port, Millis lower,
                                Millis upper) {
  const auto& pr = port_read(ctx, port);
  if (pr.mode != ReadMode::ranged)
    deny(ctx, "input '" + std::string(port) + "' is fed by a stateless edge", "history");
  auto out = read_or_empty(store_, [&] { return store_.read(pr.tag, lower, upper); }, pr.tag);
  ++counters_.reads;
  counters_.read_bytes += total_bytes(out);
  return out;
}

std::vector<Entry> Broker::read_last_n(const ExecutionContext& ctx, std::string_view port,
                                       std::size_t n) {
  const auto& pr = port_read(ctx, port);
  if (pr.mode != ReadMode::ranged)
    deny(ctx, "input '" + std::string(port) + "' is fed by a stateless edge", "history");
  auto out = read_or_empty(store_, [&] { return store_.read_last_n(pr.tag, n); }, pr.tag);
  ++counters_.reads;
  counters_.read_bytes += total_bytes(out);
  return out;
}

Entry Broker::read_event(const ExecutionContext& ctx, std::string_view port) {
  const auto& pr = port_read(ctx, port);
  const auto& t = ctx.trigger;
  if (t.cause != Trigger::Cause::event || t.tag != pr.tag) {
    if (pr.mode != ReadMode::ranged)
      deny(ctx, "input '" + std::string(port) + "' did not trigger this run", "history");
    throw Error(Errc::UnknownEntry, "input '" + std::string(port) + "' did not trigger this run",
                std::string(port));
  }
  auto e = store_.read_event(pr.tag, t.entry_id);
  ++counters_.reads;
  counters_.read_bytes += e.payload.size();
  return e;
}

void Broker::notify(const std::vector<Consumer>& consumers,
                    const std::map<std::string, std::uint64_t>& ids) {
  TriggerSink sink;
  {
    std::lock_guard lock(hooks_mutex_);
    sink = sink_;
  }
  if (!sink) return;
  for (const auto& c : consumers) {
    auto it = ids.find(c.tag);
    if (it != ids.end()) sink(Trigger::event(c.instance, c.tag, it->second));
  }
}

std::map<std::string, std::uint64_t> Broker::push(const ExecutionContext& ctx,
                                                  std::string_view port, Bytes payload) {
  auto it = ctx.pushes.find(std::string(port));
  if (it == ctx.pushes.end())
    deny(ctx, ctx.instance_id + " has no output '" + std::string(port) + "'", "port");
  ++counters_.pushes;
  counters_.push_bytes += payload.size();
  return publish(it->second, std::move(payload));
}

std::map<std::string, std::uint64_t> Broker::publish(const OutputRoute& route, Bytes payload) {
  const Millis ts = clock_.now_ms();
  std::map<std::string, std::uint64_t> ids;
  for (const auto& tag : route.tags) ids[tag] = store_.push(tag, ts, payload);
  notify(route.consumers, ids);
  return ids;
}

NetResponse Broker::network(const ExecutionContext& ctx, std::string_view domain,
                            const NetRequest& request) {
  std::string d(domain);
  if (!ctx.domains.contains(d))
    deny(ctx, ctx.instance_id + " may not reach '" + d + "'", "domain", d);
  ++counters_.requests;
  counters_.request_bytes += request.body.size();
  auto response = transport_.send(d, request);
  counters_.response_bytes += response.body.size();

  Provenance provenance;
  {
    std::lock_guard lock(hooks_mutex_);
    provenance = provenance_;
  }
  AuditRecord r;
  r.kind = AuditRecord::Kind::network;
  r.timestamp = clock_.now_ms();
  r.instance = ctx.instance_id;
  if (provenance) r.pipelines = provenance(ctx.instance_id, d);
  r.domain = d;
  r.bytes_out = request.body.size();
  r.bytes_in = response.body.size();
  r.graph_version = ctx.graph_version;
  r.detail = request.method + " " + request.path;
  audit_.append(std::move(r));
  return response;
}

}  // namespace karl
