#pragma once

#include <memory>
#include <string>

#include "karl/hub.hpp"
#include "karl/sim.hpp"

namespace karl {

/// HTTP status an error code maps to.
int http_status(Errc code);
/// Inverse of to_string(Errc); nullopt for unknown names.
std::optional<Errc> errc_from_string(std::string_view name);
/// `{"error":{"code","message","detail"}}`.
Json error_json(const Error& e);

/// JSON-over-HTTP front of a Hub.
class HubServer {
 public:
  explicit HubServer(Hub& hub);
  ~HubServer();
  HubServer(const HubServer&) = delete;
  HubServer& operator=(const HubServer&) = delete;

  /// Binds and serves in the background; port 0 picks an ephemeral one.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// Thin blocking client. Non-2xx replies carrying an error body are
/// rethrown as Error; connection problems throw Transport.
class HubClient {
 public:
  /// `url` is `http://host:port` or `host:port`.
  explicit HubClient(std::string url, std::string token = {});

  Json get(const std::string& path) const;
  Json post(const std::string& path, const Json& body) const;
  Json put(const std::string& path, const Json& body) const;
  Json del(const std::string& path) const;
  /// Raw body, raw reply.
  HttpReply request(const std::string& method, const std::string& path, const std::string& body,
                    const std::string& content_type = "application/json") const;

  void set_token(std::string token) { token_ = std::move(token); }
  const std::string& host() const { return host_; }
  int port() const { return port_; }

 private:
  Json decode(const HttpReply& reply) const;

  std::string host_;
  int port_ = 0;
  std::string token_;
};

/// DeviceLink over the device endpoints.
class HttpDeviceLink final : public sim::DeviceLink {
 public:
  HttpDeviceLink(std::string url, std::string device, std::string token, Duration wait = Duration{0});
  void push(const std::string& port, const Bytes& payload) override;
  std::vector<Entry> poll(const std::string& port, std::uint64_t after) override;

 private:
  HubClient client_;
  std::string device_;
  Duration wait_;
};

/// DeviceLink calling a Hub in-process.
class LocalDeviceLink final : public sim::DeviceLink {
 public:
  LocalDeviceLink(Hub& hub, std::string device, std::string token)
      : hub_(hub), device_(std::move(device)), token_(std::move(token)) {}
  void push(const std::string& port, const Bytes& payload) override;
  std::vector<Entry> poll(const std::string& port, std::uint64_t after) override;

 private:
  Hub& hub_;
  std::string device_;
  std::string token_;
};

/// Percent-encodes a query component.
std::string url_encode(std::string_view s);

}  // namespace karl
