#include <httplib.h>

#include "karl/graph_json.hpp"
#include "karl/sim.hpp"

namespace karl::sim {

namespace {

bool under(const std::string& domain, const std::string& parent) {
  if (domain == parent) return true;
  return domain.size() > parent.size() &&
         domain.compare(domain.size() - parent.size(), parent.size(), parent) == 0 &&
         domain[domain.size() - parent.size() - 1] == '.';
}

}  // namespace

FakeInternet::FakeInternet(Clock& clock) : clock_(clock) {}

bool FakeInternet::serves(const std::string& domain) const {
  return under(domain, "weather.com") || under(domain, "firmware.com") ||
         under(domain, "statistics.com");
}

NetResponse FakeInternet::handle(const std::string& domain, const NetRequest& request) {
  if (!serves(domain)) throw Error(Errc::Transport, "unknown host '" + domain + "'", domain);
  {
    std::lock_guard lock(mutex_);
    log_.push_back({clock_.now_ms(), domain, request.method, request.path, request.body.size()});
  }
  if (under(domain, "weather.com"))
    return {200, Json{{"forecast", "sunny"}, {"temp_c", 21}}.dump()};
  if (under(domain, "firmware.com")) return {200, "KARLFW:1.4.2\n"};
  return {200, Json{{"accepted", request.body.size()}}.dump()};
}

std::vector<RecordedRequest> FakeInternet::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t FakeInternet::count(const std::string& domain) const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& r : log_) n += r.domain == domain;
  return n;
}

std::size_t FakeInternet::count_under(const std::string& domain) const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& r : log_) n += under(r.domain, domain);
  return n;
}

void FakeInternet::clear() {
  std::lock_guard lock(mutex_);
  log_.clear();
}

NetResponse FakeInternetTransport::send(const std::string& domain, const NetRequest& request) {
  return internet_.handle(domain, request);
}

struct FakeInternetServer::Impl {
  FakeInternet& internet;
  httplib::Server server;
  std::thread thread;

  explicit Impl(FakeInternet& i) : internet(i) {}
};

FakeInternetServer::FakeInternetServer(FakeInternet& internet)
    : impl_(std::make_unique<Impl>(internet)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    auto host = req.get_header_value("Host");
    if (auto colon = host.find(':'); colon != std::string::npos) host.resize(colon);
    try {
      auto out = impl_->internet.handle(host, {req.method, req.path, req.body});
      res.status = out.status;
      res.set_content(out.body, "application/octet-stream");
    } catch (const Error& e) {
      res.status = 502;
      res.set_content(e.what(), "text/plain");
    }
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
}

FakeInternetServer::~FakeInternetServer() { stop(); }

int FakeInternetServer::start() {
  port_ = impl_->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw Error(Errc::Transport, "cannot bind loopback port");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void FakeInternetServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

NetResponse LoopbackTransport::send(const std::string& domain, const NetRequest& request) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5);
  httplib::Headers headers{{"Host", domain}};
  httplib::Result res;
  if (request.method == "GET")
    res = client.Get(request.path, headers);
  else if (request.method == "PUT")
    res = client.Put(request.path, headers, request.body, "application/octet-stream");
  else
    res = client.Post(request.path, headers, request.body, "application/octet-stream");
  if (!res) throw Error(Errc::Transport, "request to '" + domain + "' failed", domain);
  if (res->status == 502) throw Error(Errc::Transport, res->body, domain);
  return {res->status, res->body};
}

}  // namespace karl::sim
