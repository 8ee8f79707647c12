#include "karl/hub_http.hpp"

#include <httplib.h>

#include <charconv>
#include <sstream>
#include <thread>

#include "karl/base64.hpp"

namespace karl {

int http_status(Errc code) {
  switch (code) {
    case Errc::AuthFailure: return 401;
    case Errc::AccessDenied: return 403;
    case Errc::UnknownDevice:
    case Errc::UnknownRegistration:
    case Errc::UnknownInstance: return 404;
    case Errc::DuplicateDevice:
    case Errc::IrreconcilableOverlap: return 409;
    case Errc::StorageFull: return 507;
    case Errc::Transport:
    case Errc::TransferFailure: return 502;
    case Errc::ExecutionFailure:
    case Errc::Timeout:
    case Errc::WarmMismatch:
    case Errc::Exhausted:
    case Errc::Cancelled: return 500;
    default: return 400;
  }
}

std::optional<Errc> errc_from_string(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::InvalidArgument); ++i)
    if (to_string(static_cast<Errc>(i)) == name) return static_cast<Errc>(i);
  return std::nullopt;
}

Json error_json(const Error& e) {
  return {{"error", {{"code", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}}}};
}

std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

namespace {

using Req = httplib::Request;
using Res = httplib::Response;

Json entry_json(const std::string& port, const Entry& e) {
  return {{"port", port},
          {"id", e.id},
          {"timestamp", e.timestamp},
          {"payload", base64_encode(e.payload)}};
}

Json body_json(const Req& req) {
  if (req.body.empty()) return Json::object();
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ValidationFailure, "request body is not valid JSON");
  return j;
}

std::string bearer(const Req& req) {
  auto h = req.get_header_value("Authorization");
  if (h.rfind("Bearer ", 0) == 0) return h.substr(7);
  return req.get_param_value("token");
}

std::uint64_t to_u64(const std::string& s, const char* what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(Errc::InvalidArgument, std::string("bad ") + what + " '" + s + "'", what);
  return v;
}

std::optional<std::uint64_t> param_u64(const Req& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return to_u64(req.get_param_value(name), name);
}

/// `port:id,port:id`.
std::map<std::string, std::uint64_t> parse_cursor(const std::string& text) {
  std::map<std::string, std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    if (colon == std::string::npos) {
      out[item] = 0;
    } else {
      out[item.substr(0, colon)] = to_u64(item.substr(colon + 1), "cursor");
    }
  }
  return out;
}

/// Accepts `{"decisions":{text:bool}}` or index lists into `texts`.
UserDecisions decisions_from_body(const Json& body, const std::vector<std::string>& texts) {
  UserDecisions d;
  if (body.contains("decisions")) {
    if (!body["decisions"].is_object())
      throw Error(Errc::ValidationFailure, "\"decisions\" must map permission text to a boolean");
    for (const auto& [text, v] : body["decisions"].items()) {
      if (!v.is_boolean()) throw Error(Errc::ValidationFailure, "decision for '" + text + "' is not a boolean");
      d[text] = v.get<bool>();
    }
  }
  auto pick = [&](const char* key, bool allow) {
    if (!body.contains(key)) return;
    for (const auto& idx : body[key]) {
      if (!idx.is_number_unsigned() || idx.get<std::size_t>() < 1 || idx.get<std::size_t>() > texts.size())
        throw Error(Errc::InvalidArgument, std::string("permission index out of range in \"") + key + "\"",
                    idx.dump());
      d[texts[idx.get<std::size_t>() - 1]] = allow;
    }
  };
  if (body.value("allow_all", false))
    for (const auto& t : texts) d[t] = true;
  if (body.value("deny_all", false))
    for (const auto& t : texts) d[t] = false;
  pick("allow", true);
  pick("deny", false);
  return d;
}

Json policies_json(const std::vector<ExitPolicy>& ps) {
  Json out = Json::array();
  for (const auto& p : ps)
    out.push_back({{"tag", p.tag}, {"expr", render_policy(p.expr)}, {"line", p.line()}});
  return out;
}

}  // namespace

struct HubServer::Impl {
  Hub& hub;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Hub& h) : hub(h) { routes(); }

  using Handler = std::function<Json(const Req&, Res&)>;

  httplib::Server::Handler wrap(Handler h, bool admin) {
    return [this, h, admin](const Req& req, Res& res) {
      try {
        if (admin) hub.check_admin(bearer(req));
        auto out = h(req, res);
        if (!out.is_null()) res.set_content(out.dump(), "application/json");
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(error_json(e).dump(), "application/json");
      } catch (const Json::exception& e) {
        res.status = 400;
        res.set_content(error_json(Error(Errc::ValidationFailure, e.what())).dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(error_json(Error(Errc::ExecutionFailure, e.what())).dump(),
                        "application/json");
      }
    };
  }

  void routes() {
    auto& s = server;

    // Devices.
    s.Post("/device/register", wrap([this](const Req& req, Res& res) {
             auto r = hub.register_device(body_json(req));
             res.status = 201;
             return r.to_json();
           }, false));
    s.Post(R"(/device/([^/]+)/push)", wrap([this](const Req& req, Res&) {
             auto port = req.get_param_value("port");
             if (port.empty()) throw Error(Errc::InvalidArgument, "missing ?port=", "port");
             auto ids = hub.device_push(req.matches[1], bearer(req), port, req.body);
             return Json{{"ids", ids}};
           }, false));
    s.Get(R"(/device/([^/]+)/inputs)", wrap([this](const Req& req, Res&) {
            auto cursor = parse_cursor(req.get_param_value("cursor"));
            auto timeout = Duration{static_cast<Millis>(param_u64(req, "timeout_ms").value_or(0))};
            timeout = std::min(timeout, Duration{30000});
            auto entries = hub.device_poll(req.matches[1], bearer(req), cursor, timeout);
            Json list = Json::array();
            for (const auto& e : entries) {
              list.push_back(entry_json(e.port, e.entry));
              cursor[e.port] = std::max(cursor[e.port], e.entry.id);
            }
            return Json{{"entries", list}, {"cursor", cursor}};
          }, false));

    // Registrations and permissions.
    s.Get("/registrations", wrap([this](const Req& req, Res&) {
            auto status = req.get_param_value("status");
            Json out = Json::array();
            for (const auto& r : hub.registrations())
              if (status.empty() || to_string(r.status) == status) out.push_back(r.to_json());
            return out;
          }, true));
    s.Get(R"(/registrations/([^/]+))", wrap([this](const Req& req, Res&) {
            return hub.registration(req.matches[1]).to_json(true);
          }, true));
    s.Post(R"(/registrations/([^/]+)/decisions)", wrap([this](const Req& req, Res&) {
             auto body = body_json(req);
             auto reg = hub.registration(req.matches[1]);
             DecisionRequest d;
             d.reject = body.value("reject", false);
             if (!d.reject) d.decisions = decisions_from_body(body, reg.permissions);
             return hub.decide(reg.id, d).to_json();
           }, true));
    s.Post("/graph/edges", wrap([this](const Req& req, Res& res) {
             auto r = hub.propose_link(body_json(req));
             res.status = 201;
             return r.to_json();
           }, true));
    s.Get("/graph", wrap([this](const Req&, Res&) { return hub.graph_json(); }, true));
    s.Get("/permissions", wrap([this](const Req&, Res&) { return hub.permissions_json(); }, true));
    s.Post("/permissions/revise", wrap([this](const Req& req, Res&) {
             std::vector<std::string> texts;
             for (const auto& p : hub.permissions_json()) texts.push_back(p["text"]);
             return hub.revise(decisions_from_body(body_json(req), texts)).to_json();
           }, true));

    // Exit policies.
    s.Get("/policies", wrap([this](const Req&, Res&) { return policies_json(hub.policies()); }, true));
    s.Put("/policies", wrap([this](const Req& req, Res&) {
            auto body = body_json(req);
            std::string tag, expr;
            if (body.contains("line")) {
              auto p = parse_exit_policy_line(body["line"].get<std::string>());
              tag = p.tag;
              expr = render_policy(p.expr);
            } else {
              tag = body.at("tag").get<std::string>();
              expr = body.at("expr").get<std::string>();
            }
            return hub.set_policy(tag, expr).to_json();
          }, true));
    s.Delete("/policies", wrap([this](const Req& req, Res&) {
               return hub.remove_policy(req.get_param_value("tag")).to_json();
             }, true));
    s.Post("/policies/parse", wrap([](const Req& req, Res&) {
             auto body = body_json(req);
             try {
               auto e = parse_policy(body.at("expr").get<std::string>());
               Json out{{"ok", true}, {"expr", render_policy(e)}};
               if (body.contains("modules"))
                 out["satisfied"] = satisfies(body["modules"].get<std::vector<std::string>>(), e);
               return out;
             } catch (const Error& e) {
               if (e.code() != Errc::SyntaxError) throw;
               auto j = error_json(e);
               j["ok"] = false;
               return j;
             }
           }, true));

    // Apps and modules.
    s.Get(R"(/apps/([^/]+))", wrap([this](const Req& req, Res&) { return hub.app(req.matches[1]); }, true));
    s.Get(R"(/apps/([^/]+)/index\.html)", wrap([this](const Req& req, Res& res) {
            auto app = hub.app(req.matches[1]);
            res.set_content(app["html"].get<std::string>(), "text/html");
            return Json();
          }, true));
    s.Get(R"(/apps/([^/]+)/read)", wrap([this](const Req& req, Res&) {
            auto n = param_u64(req, "n").value_or(1);
            auto tag = req.get_param_value("tag");
            Json out = Json::array();
            for (const auto& e : hub.app_read(req.matches[1], tag, n)) out.push_back(entry_json(tag, e));
            return out;
          }, true));
    s.Post(R"(/apps/([^/]+)/push)", wrap([this](const Req& req, Res&) {
             auto ids = hub.app_push(req.matches[1], req.get_param_value("tag"), req.body);
             return Json{{"ids", ids}};
           }, true));
    s.Post(R"(/modules/([^/]+)/spawn)", wrap([this](const Req& req, Res& res) {
             std::optional<std::string> app;
             if (req.has_param("app")) app = req.get_param_value("app");
             auto user = req.has_param("user") ? req.get_param_value("user") : std::string("admin");
             auto pos = hub.spawn(req.matches[1], app, user);
             res.status = 202;
             return Json{{"instance", req.matches[1]}, {"position", pos}};
           }, true));

    // Observability.
    s.Get("/audit", wrap([this](const Req& req, Res&) {
            AuditQuery q;
            if (req.has_param("kind")) {
              auto k = req.get_param_value("kind");
              bool found = false;
              for (auto kind : {AuditRecord::Kind::network, AuditRecord::Kind::denied,
                                AuditRecord::Kind::failure, AuditRecord::Kind::exhausted})
                if (to_string(kind) == k) q.kind = kind, found = true;
              if (!found) throw Error(Errc::InvalidArgument, "unknown audit kind '" + k + "'", "kind");
            }
            q.instance = req.get_param_value("instance");
            q.domain = req.get_param_value("domain");
            q.after_seq = param_u64(req, "after").value_or(0);
            q.limit = param_u64(req, "limit").value_or(0);
            Json out = Json::array();
            for (const auto& r : hub.audit(q)) out.push_back(r.to_json());
            return out;
          }, true));
    s.Get("/metrics", wrap([this](const Req&, Res&) { return hub.metrics(); }, true));
  }
};

HubServer::HubServer(Hub& hub) : impl_(std::make_unique<Impl>(hub)) {}

HubServer::~HubServer() { stop(); }

int HubServer::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw Error(Errc::Transport, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HubServer::listen(const std::string& host, int port) {
  start(host, port);
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HubServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id())
    impl_->thread.join();
}

// ---- client ----

HubClient::HubClient(std::string url, std::string token) : token_(std::move(token)) {
  if (url.rfind("http://", 0) == 0) url = url.substr(7);
  while (!url.empty() && url.back() == '/') url.pop_back();
  auto colon = url.rfind(':');
  if (colon == std::string::npos) {
    host_ = url;
    port_ = 8420;
  } else {
    host_ = url.substr(0, colon);
    port_ = static_cast<int>(to_u64(url.substr(colon + 1), "port"));
  }
  if (host_.empty()) throw Error(Errc::InvalidArgument, "hub address has no host", "hub");
}

HttpReply HubClient::request(const std::string& method, const std::string& path,
                             const std::string& body, const std::string& content_type) const {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(60, 0);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  httplib::Result res;
  if (method == "GET")
    res = client.Get(path, headers);
  else if (method == "POST")
    res = client.Post(path, headers, body, content_type);
  else if (method == "PUT")
    res = client.Put(path, headers, body, content_type);
  else if (method == "DELETE")
    res = client.Delete(path, headers);
  else
    throw Error(Errc::InvalidArgument, "unsupported method " + method);
  if (!res)
    throw Error(Errc::Transport,
                "cannot reach hub at " + host_ + ":" + std::to_string(port_) + " (" +
                    httplib::to_string(res.error()) + ")",
                host_);
  return {res->status, res->body};
}

Json HubClient::decode(const HttpReply& reply) const {
  auto j = Json::parse(reply.body, nullptr, false);
  if (reply.status >= 200 && reply.status < 300) {
    if (j.is_discarded()) throw Error(Errc::Transport, "hub replied with malformed JSON");
    return j;
  }
  if (!j.is_discarded() && j.contains("error")) {
    const auto& e = j["error"];
    auto code = errc_from_string(e.value("code", "")).value_or(Errc::Transport);
    throw Error(code, e.value("message", ""), e.value("detail", ""));
  }
  throw Error(Errc::Transport, "hub replied " + std::to_string(reply.status));
}

Json HubClient::get(const std::string& path) const { return decode(request("GET", path, {})); }
Json HubClient::post(const std::string& path, const Json& body) const {
  return decode(request("POST", path, body.dump()));
}
Json HubClient::put(const std::string& path, const Json& body) const {
  return decode(request("PUT", path, body.dump()));
}
Json HubClient::del(const std::string& path) const { return decode(request("DELETE", path, {})); }

// ---- device links ----

HttpDeviceLink::HttpDeviceLink(std::string url, std::string device, std::string token, Duration wait)
    : client_(std::move(url), std::move(token)), device_(std::move(device)), wait_(wait) {}

void HttpDeviceLink::push(const std::string& port, const Bytes& payload) {
  auto reply = client_.request("POST", "/device/" + url_encode(device_) + "/push?port=" + url_encode(port),
                               payload, "application/octet-stream");
  if (reply.status != 200) {
    auto j = Json::parse(reply.body, nullptr, false);
    if (!j.is_discarded() && j.contains("error"))
      throw Error(errc_from_string(j["error"].value("code", "")).value_or(Errc::Transport),
                  j["error"].value("message", ""), j["error"].value("detail", ""));
    throw Error(Errc::Transport, "push failed with status " + std::to_string(reply.status));
  }
}

std::vector<Entry> HttpDeviceLink::poll(const std::string& port, std::uint64_t after) {
  auto j = client_.get("/device/" + url_encode(device_) + "/inputs?cursor=" + url_encode(port) + ":" +
                       std::to_string(after) + "&timeout_ms=" + std::to_string(wait_.count()));
  std::vector<Entry> out;
  for (const auto& e : j["entries"])
    out.push_back({e["id"], e["timestamp"], base64_decode(e["payload"].get<std::string>())});
  return out;
}

void LocalDeviceLink::push(const std::string& port, const Bytes& payload) {
  hub_.device_push(device_, token_, port, payload);
}

std::vector<Entry> LocalDeviceLink::poll(const std::string& port, std::uint64_t after) {
  std::vector<Entry> out;
  for (auto& e : hub_.device_poll(device_, token_, {{port, after}}, Duration{0}))
    out.push_back(std::move(e.entry));
  return out;
}

}  // namespace karl
