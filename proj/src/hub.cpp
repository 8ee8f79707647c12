#include "karl/hub.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>

#include <fcntl.h>
#include <unistd.h>

namespace karl {

// ---- config ----

HubConfig HubConfig::from_json(const Json& j) {
  HubConfig c;
  try {
    c.listen_host = j.value("listen_host", c.listen_host);
    c.listen_port = j.value("listen_port", c.listen_port);
    if (j.contains("data_dir") && !j["data_dir"].is_null())
      c.data_dir = j["data_dir"].get<std::string>();
    c.workers = j.value("workers", c.workers);
    c.worker_cache_bytes = j.value("worker_cache_bytes", c.worker_cache_bytes);
    c.default_quota = j.value("default_quota", c.default_quota);
    if (j.contains("quotas")) c.quotas = j["quotas"].get<std::map<std::string, std::size_t>>();
    if (j.contains("policy")) c.policy = PlacementPolicy::from_json(j["policy"]);
    c.admin_token = j.value("admin_token", c.admin_token);
    c.internet = j.value("internet", c.internet);
    c.tick_period = Duration{j.value("tick_period_ms", c.tick_period.count())};
    c.sync = j.value("sync", c.sync);
    c.seed = j.value("seed", c.seed);
    for (const auto& p : j.value("packages", std::vector<std::string>{})) c.packages.emplace_back(p);
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationFailure, std::string("bad hub config: ") + e.what());
  }
  if (c.workers < 1) throw Error(Errc::ValidationFailure, "workers must be at least 1");
  if (c.admin_token.empty()) throw Error(Errc::ValidationFailure, "admin_token must be set");
  return c;
}

Json HubConfig::to_json() const {
  std::vector<std::string> pkgs;
  for (const auto& p : packages) pkgs.push_back(p.string());
  return {{"listen_host", listen_host},
          {"listen_port", listen_port},
          {"data_dir", data_dir ? Json(data_dir->string()) : Json()},
          {"workers", workers},
          {"worker_cache_bytes", worker_cache_bytes},
          {"default_quota", default_quota},
          {"quotas", quotas},
          {"policy", policy.to_json()},
          {"internet", internet},
          {"tick_period_ms", tick_period.count()},
          {"sync", sync},
          {"seed", seed},
          {"packages", pkgs}};
}

HubConfig load_hub_config(const std::optional<std::filesystem::path>& file,
                          const std::optional<std::filesystem::path>& data_dir) {
  std::optional<std::filesystem::path> path = file;
  if (!path) {
    if (const char* env = std::getenv("KARL_CONFIG"); env && *env) path = env;
  }
  HubConfig config;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(Errc::ValidationFailure, "cannot read config " + path->string());
    auto j = Json::parse(in, nullptr, false);
    if (j.is_discarded())
      throw Error(Errc::ValidationFailure, "config " + path->string() + " is not valid JSON");
    config = HubConfig::from_json(j);
  }
  if (data_dir) config.data_dir = data_dir;
  return config;
}

// ---- registrations ----

std::string_view to_string(Registration::Status s) {
  switch (s) {
    case Registration::Status::pending: return "pending";
    case Registration::Status::approved: return "approved";
    case Registration::Status::rejected: return "rejected";
  }
  return "unknown";
}

Json Registration::to_json(bool with_fragment) const {
  Json perms = Json::array();
  for (std::size_t i = 0; i < permissions.size(); ++i)
    perms.push_back({{"index", i + 1}, {"text", permissions[i]}});
  Json j{{"id", id},
         {"kind", kind == Kind::device ? "device" : "link"},
         {"status", to_string(status)},
         {"permissions", perms}};
  if (kind == Kind::device) {
    j["device"] = device_id;
    if (with_fragment) j["fragment"] = karl::to_json(fragment);
  } else {
    j["edge"] = karl::to_json(edge);
  }
  if (!token.empty()) j["token"] = token;
  return j;
}

Json ChangeResult::to_json() const {
  Json c = Json::array();
  for (const auto& x : conflicts)
    c.push_back({{"permission", x.permission}, {"policy_tag", x.policy_tag}, {"policy", x.policy_expr}});
  Json s = Json::array();
  for (const auto& x : sacrificed) s.push_back({{"permission", x.permission}, {"reason", x.reason}});
  return {{"version", version}, {"conflicts", c}, {"sacrificed", s}};
}

// ---- fold ----

namespace {

std::set<std::string> permission_texts(const DataflowGraph& g) {
  std::set<std::string> out;
  for (const auto& p : extract_permissions(g)) out.insert(p.text());
  return out;
}

Edge edge_from_json(const DataflowGraph& g, const Json& j) {
  try {
    Edge e;
    e.src = parse_node_ref(g, j.at("src").get<std::string>(), true);
    e.dst = parse_node_ref(g, j.at("dst").get<std::string>(), false);
    e.statefulness = j.value("stateful", false) ? Statefulness::stateful : Statefulness::stateless;
    return e;
  } catch (const Json::exception& ex) {
    throw Error(Errc::ValidationFailure, std::string("malformed edge: ") + ex.what());
  }
}

Registration& pending(HubState& s, const std::string& id) {
  auto it = s.registrations.find(id);
  if (it == s.registrations.end())
    throw Error(Errc::UnknownRegistration, "no registration '" + id + "'", id);
  if (it->second.status != Registration::Status::pending)
    throw Error(Errc::InvalidArgument,
                "registration '" + id + "' is already " + std::string(to_string(it->second.status)),
                id);
  return it->second;
}

UserDecisions decisions_from(const Json& j) {
  UserDecisions d;
  for (const auto& [text, v] : j.items()) d[text] = v.get<bool>();
  return d;
}

}  // namespace

HubState apply_event(HubState s, const Json& ev) {
  const auto type = ev.at("type").get<std::string>();
  if (type == "register") {
    Registration r;
    r.id = ev.at("id").get<std::string>();
    r.kind = Registration::Kind::device;
    r.device_id = ev.at("device").get<std::string>();
    r.fragment = graph_from_json(ev.at("fragment"));
    r.permissions = ev.at("permissions").get<std::vector<std::string>>();
    s.tokens[r.device_id] = ev.at("token").get<std::string>();
    s.registrations[r.id] = std::move(r);
    ++s.next_registration;
  } else if (type == "link") {
    Registration r;
    r.id = ev.at("id").get<std::string>();
    r.kind = Registration::Kind::link;
    r.edge = edge_from_json(s.base, ev.at("edge"));
    r.permissions = ev.at("permissions").get<std::vector<std::string>>();
    s.registrations[r.id] = std::move(r);
    ++s.next_registration;
  } else if (type == "decide") {
    auto& r = pending(s, ev.at("id").get<std::string>());
    if (ev.value("reject", false)) {
      r.status = Registration::Status::rejected;
      if (r.kind == Registration::Kind::device) s.tokens.erase(r.device_id);
      return s;
    }
    auto d = decisions_from(ev.at("decisions"));
    std::vector<std::string> missing;
    for (const auto& text : r.permissions)
      if (!d.contains(text)) missing.push_back(text);
    if (!missing.empty())
      throw Error(Errc::IncompleteDecisions,
                  std::to_string(missing.size()) + " listed permission(s) have no decision",
                  missing.front());
    if (r.kind == Registration::Kind::device) {
      if (s.base.devices.contains(r.device_id))
        throw Error(Errc::DuplicateDevice, "device '" + r.device_id + "' is already registered",
                    r.device_id);
      s.base = register_fragment(s.base, r.fragment);
    } else {
      s.base = add_edge(s.base, r.edge.src, r.edge.dst, r.edge.statefulness);
    }
    for (auto& [text, allow] : d) s.decisions[text] = allow;
    r.status = Registration::Status::approved;
    ++s.version;
  } else if (type == "revise") {
    auto d = decisions_from(ev.at("decisions"));
    auto live = permission_texts(s.base);
    for (const auto& [text, _] : d)
      if (!live.contains(text))
        throw Error(Errc::InvalidArgument, "no merged permission '" + text + "'", text);
    for (auto& [text, allow] : d) s.decisions[text] = allow;
    ++s.version;
  } else if (type == "policy") {
    auto tag = ev.at("tag").get<std::string>();
    auto expr = parse_policy(ev.at("expr").get<std::string>());
    if (!graph_has_tag(s.base, tag))
      throw Error(Errc::UnknownTag, "no node carries tag '" + tag + "'", tag);
    s.policies.insert_or_assign(tag, ExitPolicy{tag, std::move(expr)});
    ++s.version;
  } else if (type == "policy_remove") {
    auto tag = ev.at("tag").get<std::string>();
    if (s.policies.erase(tag) == 0)
      throw Error(Errc::InvalidArgument, "no exit policy on '" + tag + "'", tag);
    ++s.version;
  } else {
    throw Error(Errc::ValidationFailure, "unknown journal event '" + type + "'");
  }
  return s;
}

EffectiveGraph effective_of(const HubState& s) {
  std::vector<ExitPolicy> policies;
  for (const auto& [_, p] : s.policies) policies.push_back(p);
  return enforce(s.base, s.decisions, policies);
}

// ---- journal ----

Journal::Journal(std::optional<std::filesystem::path> file, bool sync)
    : file_(std::move(file)), sync_(sync) {
  if (!file_) return;
  std::filesystem::create_directories(file_->parent_path());
  fd_ = ::open(file_->c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd_ < 0) throw Error(Errc::InvalidArgument, "cannot open journal " + file_->string());
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<Json> Journal::load() const {
  if (!file_) return memory_;
  std::vector<Json> out;
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) break;  // torn final line
    out.push_back(std::move(j));
  }
  return out;
}

void Journal::append(const Json& event) {
  if (!file_) {
    memory_.push_back(event);
    return;
  }
  auto line = event.dump() + "\n";
  std::size_t off = 0;
  while (off < line.size()) {
    auto n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::StorageFull, std::string("journal write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  if (sync_) ::fsync(fd_);
}

// ---- hub ----

Hub::Hub(HubConfig config, Clock& clock, NetworkTransport* transport)
    : config_(std::move(config)), clock_(clock) {
  if (transport) {
    transport_ = transport;
  } else if (config_.internet == "fake") {
    internet_ = std::make_unique<sim::FakeInternet>(clock_);
    owned_transport_ = std::make_unique<sim::FakeInternetTransport>(*internet_);
    transport_ = owned_transport_.get();
  } else if (config_.internet.rfind("loopback:", 0) == 0) {
    owned_transport_ =
        std::make_unique<sim::LoopbackTransport>("127.0.0.1", std::stoi(config_.internet.substr(9)));
    transport_ = owned_transport_.get();
  } else {
    throw Error(Errc::ValidationFailure, "unknown internet setting '" + config_.internet + "'");
  }

  DataStoreOptions so;
  so.default_quota = config_.default_quota;
  so.quotas = config_.quotas;
  so.sync = config_.sync;
  std::optional<std::filesystem::path> journal_path, audit_path;
  if (config_.data_dir) {
    so.directory = *config_.data_dir / "store";
    journal_path = *config_.data_dir / "journal.jsonl";
    audit_path = *config_.data_dir / "audit.jsonl";
  }
  store_ = std::make_unique<DataStore>(so);
  audit_ = std::make_unique<AuditLog>(audit_path);

  sim::install_reference_packages(catalog_);
  for (const auto& p : config_.packages) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::ValidationFailure, "cannot read package " + p.string());
    Bytes blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto contents = unpack(blob);
    auto m = contents.manifest;
    m.package.hash = sha256_hex(blob);
    m.package.size_bytes = blob.size();
    catalog_.add({std::move(m), std::make_shared<const Bytes>(std::move(blob))});
  }

  broker_ = std::make_unique<Broker>(*store_, *transport_, *audit_, clock_);
  host_ = std::make_unique<ModuleHost>(*broker_, *audit_, catalog_, clock_);
  sim::register_reference_programs(*host_);
  journal_ = std::make_unique<Journal>(journal_path, config_.sync);

  rng_.seed(config_.seed != 0 ? config_.seed : std::random_device{}());

  for (const auto& ev : journal_->load()) state_ = apply_event(std::move(state_), ev);
  install(state_);

  scheduler_ = std::make_unique<Scheduler>(*host_, config_.policy);
  for (int i = 1; i <= config_.workers; ++i) {
    std::optional<std::filesystem::path> root;
    if (config_.data_dir) root = *config_.data_dir / "workers" / std::to_string(i);
    scheduler_->add_worker(std::make_shared<SandboxWorker>(i, *broker_, clock_,
                                                           config_.worker_cache_bytes, root));
  }
  broker_->set_trigger_sink([this](const Trigger& t) {
    try {
      scheduler_->enqueue(t);
    } catch (const Error&) {
    }
  });
  broker_->set_provenance([this](const std::string& instance, const std::string& domain) {
    std::lock_guard lock(mutex_);
    auto it = provenance_.find({instance, domain});
    return it == provenance_.end() ? std::vector<std::string>{} : it->second;
  });
}

Hub::~Hub() {
  stop_ticker();
  scheduler_.reset();
}

void Hub::install(const HubState& s) {
  auto eff = std::make_shared<const EffectiveGraph>(effective_of(s));
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> prov;
  for (const auto& p : extract_permissions(eff->graph()))
    if (p.sink_is_domain && !p.chain.empty())
      prov[{p.chain.back(), p.sink}].push_back(p.text());
  effective_ = eff;
  provenance_ = std::move(prov);
  host_->set_graph(eff->graph(), s.version);
}

ChangeResult Hub::commit(HubState next, const Json& event) {
  journal_->append(event);
  const bool changed = next.version != state_.version;
  state_ = std::move(next);
  install(state_);
  if (changed && scheduler_) scheduler_->invalidate_warm();
  ChangeResult r;
  r.version = state_.version;
  r.conflicts = effective_->conflicts();
  r.sacrificed = effective_->sacrificed();
  return r;
}

std::string Hub::new_token() {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string t;
  for (int i = 0; i < 32; ++i) t.push_back(kHex[rng_() & 0xf]);
  return t;
}

std::vector<std::string> Hub::review_list(const DataflowGraph& before,
                                          const DataflowGraph& after) const {
  auto old_texts = permission_texts(before);
  std::vector<std::string> out;
  for (const auto& t : permission_texts(after))
    if (!old_texts.contains(t)) out.push_back(t);
  return out;
}

Registration Hub::register_device(const Json& body) {
  if (!body.is_object() || !body.contains("fragment"))
    throw Error(Errc::ValidationFailure, "registration needs a \"fragment\" object");
  return register_fragment(graph_from_json(body["fragment"], catalog_.resolver()));
}

Registration Hub::register_fragment(const DataflowGraph& fragment) {
  std::lock_guard lock(mutex_);
  if (fragment.devices.size() != 1)
    throw Error(Errc::ValidationFailure, "a registration carries exactly one device");
  auto violations = validate(fragment);
  if (!violations.empty())
    throw Error(Errc::ValidationFailure, violations.front().message,
                std::string(to_string(violations.front().kind)));
  const auto& device = fragment.devices.begin()->first;
  if (state_.base.devices.contains(device))
    throw Error(Errc::DuplicateDevice, "device '" + device + "' is already registered", device);
  for (const auto& [_, r] : state_.registrations)
    if (r.kind == Registration::Kind::device && r.device_id == device &&
        r.status == Registration::Status::pending)
      throw Error(Errc::DuplicateDevice, "device '" + device + "' already has a pending registration",
                  device);
  auto merged = karl::register_fragment(state_.base, fragment);
  std::string id = "r" + std::to_string(state_.next_registration);
  std::string token = new_token();
  Json ev{{"type", "register"},
          {"id", id},
          {"device", device},
          {"token", token},
          {"fragment", to_json(fragment)},
          {"permissions", review_list(state_.base, merged)}};
  auto next = apply_event(state_, ev);
  commit(std::move(next), ev);
  auto r = state_.registrations.at(id);
  r.token = token;
  return r;
}

Registration Hub::propose_link(const Json& body) {
  Edge e;
  {
    std::lock_guard lock(mutex_);
    e = edge_from_json(state_.base, body);
  }
  return propose_link(e);
}

Registration Hub::propose_link(const Edge& edge) {
  std::lock_guard lock(mutex_);
  auto merged = add_edge(state_.base, edge.src, edge.dst, edge.statefulness);
  std::string id = "r" + std::to_string(state_.next_registration);
  Json ev{{"type", "link"},
          {"id", id},
          {"edge", to_json(edge)},
          {"permissions", review_list(state_.base, merged)}};
  auto next = apply_event(state_, ev);
  commit(std::move(next), ev);
  return state_.registrations.at(id);
}

std::vector<Registration> Hub::registrations() const {
  std::lock_guard lock(mutex_);
  std::vector<Registration> out;
  for (const auto& [_, r] : state_.registrations) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const Registration& a, const Registration& b) {
    return std::stoul(a.id.substr(1)) < std::stoul(b.id.substr(1));
  });
  return out;
}

Registration Hub::registration(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = state_.registrations.find(id);
  if (it == state_.registrations.end())
    throw Error(Errc::UnknownRegistration, "no registration '" + id + "'", id);
  return it->second;
}

ChangeResult Hub::decide(const std::string& id, const DecisionRequest& request) {
  std::lock_guard lock(mutex_);
  Json d = Json::object();
  for (const auto& [text, allow] : request.decisions) d[text] = allow;
  Json ev{{"type", "decide"}, {"id", id}, {"reject", request.reject}, {"decisions", d}};
  auto next = apply_event(state_, ev);
  return commit(std::move(next), ev);
}

ChangeResult Hub::revise(const UserDecisions& decisions) {
  std::lock_guard lock(mutex_);
  Json d = Json::object();
  for (const auto& [text, allow] : decisions) d[text] = allow;
  Json ev{{"type", "revise"}, {"decisions", d}};
  auto next = apply_event(state_, ev);
  return commit(std::move(next), ev);
}

ChangeResult Hub::set_policy(const std::string& tag, const std::string& expr) {
  std::lock_guard lock(mutex_);
  Json ev{{"type", "policy"}, {"tag", tag}, {"expr", expr}};
  auto next = apply_event(state_, ev);
  auto r = commit(std::move(next), ev);
  std::erase_if(r.conflicts, [&](const Conflict& c) { return c.policy_tag != tag; });
  return r;
}

ChangeResult Hub::remove_policy(const std::string& tag) {
  std::lock_guard lock(mutex_);
  Json ev{{"type", "policy_remove"}, {"tag", tag}};
  auto next = apply_event(state_, ev);
  return commit(std::move(next), ev);
}

std::vector<ExitPolicy> Hub::policies() const {
  std::lock_guard lock(mutex_);
  std::vector<ExitPolicy> out;
  for (const auto& [_, p] : state_.policies) out.push_back(p);
  return out;
}

std::shared_ptr<const EffectiveGraph> Hub::effective() const {
  std::lock_guard lock(mutex_);
  return effective_;
}

std::uint64_t Hub::version() const {
  std::lock_guard lock(mutex_);
  return state_.version;
}

HubState Hub::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

Json Hub::graph_json() const {
  std::lock_guard lock(mutex_);
  auto j = effective_->to_json();
  j["version"] = state_.version;
  return j;
}

Json Hub::permissions_json() const {
  auto eff = effective();
  Json out = Json::array();
  std::size_t i = 0;
  for (const auto& d : eff->decisions()) {
    Json j{{"index", ++i},
           {"text", d.permission.text()},
           {"verdict", to_string(d.verdict)},
           {"direction",
            d.permission.direction == Direction::exfiltration ? "exfiltration" : "ingestion"}};
    if (!d.policy_tag.empty()) j["policy_tag"] = d.policy_tag;
    out.push_back(std::move(j));
  }
  return out;
}

// ---- devices ----

const DeviceDescriptor& Hub::approved_device(const HubState& s, const std::string& device) const {
  auto it = s.base.devices.find(device);
  if (it == s.base.devices.end())
    throw Error(Errc::UnknownDevice, "no approved device '" + device + "'", device);
  return it->second;
}

void Hub::check_token(const std::string& device, const std::string& token) const {
  auto it = state_.tokens.find(device);
  if (it == state_.tokens.end() || it->second != token)
    throw Error(Errc::AuthFailure, "bad credentials for device '" + device + "'", device);
}

std::map<std::string, std::uint64_t> Hub::device_push(const std::string& device,
                                                      const std::string& token,
                                                      const std::string& port, Bytes payload) {
  OutputRoute route;
  {
    std::lock_guard lock(mutex_);
    check_token(device, token);
    const auto& d = approved_device(state_, device);
    if (!d.find_output(port))
      throw Error(Errc::UnknownPort, "device '" + device + "' has no output '" + port + "'", port);
    route = route_for_output(effective_->graph(), device, port);
  }
  return broker_->publish(route, std::move(payload));
}

std::vector<InputEntry> Hub::device_poll(const std::string& device, const std::string& token,
                                         const std::map<std::string, std::uint64_t>& cursor,
                                         Duration timeout) {
  std::map<std::string, std::uint64_t> after;
  {
    std::lock_guard lock(mutex_);
    check_token(device, token);
    const auto& d = approved_device(state_, device);
    if (cursor.empty()) {
      for (const auto& p : d.inputs) after[p.name] = 0;
    } else {
      for (const auto& [port, id] : cursor) {
        if (!d.find_input(port))
          throw Error(Errc::UnknownPort, "device '" + device + "' has no input '" + port + "'", port);
        after[port] = id;
      }
    }
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto seen = store_->change_counter();
    std::vector<InputEntry> out;
    for (const auto& [port, last_seen] : after) {
      const auto tag = device_input(device, port).tag();
      const auto last = store_->last_id(tag);
      for (auto id = last_seen + 1; id <= last; ++id) out.push_back({port, store_->read_event(tag, id)});
    }
    if (!out.empty() || clock_.simulated()) return out;
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return out;
    SystemClock real;
    store_->wait_for_change(
        seen, real, std::chrono::duration_cast<Duration>(deadline - now) + Duration{1});
  }
}

// ---- apps ----

namespace {

std::string app_html(const std::string& device, const AppSpec& app) {
  auto list = [](const std::vector<std::string>& xs) {
    std::string out;
    for (const auto& x : xs) out += "<li><code>" + x + "</code></li>";
    return out;
  };
  return "<!doctype html><html><head><meta charset=\"utf-8\"><title>" + app.bundle +
         "</title></head><body><h1>" + device + "</h1><h2>Reads</h2><ul>" + list(app.read) +
         "</ul><h2>Pushes</h2><ul>" + list(app.push) + "</ul><h2>Modules</h2><ul>" +
         list(app.spawn) + "</ul><script>const DEVICE=\"" + device +
         "\";function spawn(m){return fetch('/modules/'+m+'/spawn?app='+DEVICE,{method:'POST'})}"
         "function read(t){return fetch('/apps/'+DEVICE+'/read?tag='+encodeURIComponent(t)).then(r=>r.json())}"
         "</script></body></html>";
}

const AppSpec& app_of(const DeviceDescriptor& d) {
  if (!d.app) throw Error(Errc::UnknownDevice, "device '" + d.id + "' ships no app", d.id);
  return *d.app;
}

bool contains(const std::vector<std::string>& xs, const std::string& x) {
  return std::find(xs.begin(), xs.end(), x) != xs.end();
}

}  // namespace

Json Hub::app(const std::string& device) const {
  std::lock_guard lock(mutex_);
  const auto& d = approved_device(state_, device);
  const auto& a = app_of(d);
  return {{"device", device},
          {"bundle", a.bundle},
          {"bindings", {{"read", a.read}, {"push", a.push}, {"spawn", a.spawn}}},
          {"html", app_html(device, a)}};
}

std::vector<Entry> Hub::app_read(const std::string& device, const std::string& tag, std::size_t n) {
  {
    std::lock_guard lock(mutex_);
    const auto& a = app_of(approved_device(state_, device));
    if (!contains(a.read, tag))
      throw Error(Errc::AccessDenied, "app of '" + device + "' may not read '" + tag + "'", "tag");
  }
  if (!store_->has_tag(tag)) return {};
  return store_->read_last_n(tag, n);
}

std::map<std::string, std::uint64_t> Hub::app_push(const std::string& device, const std::string& tag,
                                                   Bytes payload) {
  OutputRoute route;
  {
    std::lock_guard lock(mutex_);
    const auto& a = app_of(approved_device(state_, device));
    if (!contains(a.push, tag))
      throw Error(Errc::AccessDenied, "app of '" + device + "' may not push '" + tag + "'", "tag");
    auto node = parse_node_ref(effective_->graph(), tag, true);
    if (node.kind == PortKind::device_input)
      route.tags = {tag};
    else
      route = route_for_output(effective_->graph(), node.owner, node.port);
  }
  return broker_->publish(route, std::move(payload));
}

std::size_t Hub::spawn(const std::string& instance, const std::optional<std::string>& app_device,
                       const std::string& user) {
  if (app_device) {
    std::lock_guard lock(mutex_);
    const auto& a = app_of(approved_device(state_, *app_device));
    if (!contains(a.spawn, instance))
      throw Error(Errc::AccessDenied, "app of '" + *app_device + "' may not spawn '" + instance + "'",
                  "spawn");
  }
  return scheduler_->enqueue(Trigger::manual(instance, user));
}

// ---- admin ----

void Hub::check_admin(const std::string& token) const {
  if (token != config_.admin_token) throw Error(Errc::AuthFailure, "bad admin credential", "admin");
}

std::vector<AuditRecord> Hub::audit(const AuditQuery& query) const { return audit_->query(query); }

Json Hub::metrics() const {
  auto j = scheduler_->metrics();
  const auto& c = broker_->counters();
  j["graph_version"] = version();
  j["mediation"] = {{"reads", c.reads.load()},
                    {"read_bytes", c.read_bytes.load()},
                    {"pushes", c.pushes.load()},
                    {"push_bytes", c.push_bytes.load()},
                    {"requests", c.requests.load()},
                    {"request_bytes", c.request_bytes.load()},
                    {"response_bytes", c.response_bytes.load()},
                    {"denials", c.denials.load()}};
  j["audit_records"] = audit_->size();
  if (internet_) j["internet_requests"] = internet_->requests().size();
  return j;
}

// ---- runtime ----

std::size_t Hub::tick() {
  auto due = scheduler_->tick_intervals(clock_.now_ms());
  for (auto& t : due) scheduler_->enqueue(std::move(t));
  return due.size();
}

void Hub::start_ticker() {
  std::lock_guard lock(ticker_mutex_);
  if (ticker_.joinable()) return;
  ticker_stop_ = false;
  ticker_ = std::thread([this] {
    std::unique_lock lock(ticker_mutex_);
    while (!ticker_stop_) {
      lock.unlock();
      tick();
      lock.lock();
      ticker_cv_.wait_for(lock, config_.tick_period, [&] { return ticker_stop_; });
    }
  });
}

void Hub::stop_ticker() {
  {
    std::lock_guard lock(ticker_mutex_);
    ticker_stop_ = true;
  }
  ticker_cv_.notify_all();
  if (ticker_.joinable()) ticker_.join();
}

}  // namespace karl
