#pragma once

// Client side of the broker protocol for modules built as standalone
// executables. Frames arrive on stdin and go out on stdout, so module code
// must not write anything else to stdout.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "karl/frame.hpp"

namespace karl::sdk {

struct Entry {
  std::uint64_t id = 0;
  std::int64_t timestamp = 0;
  std::string payload;
};

struct Response {
  int status = 200;
  std::string body;
};

/// A call the hub refused; `code` is the hub error name, e.g. AccessDenied.
struct CallError : std::runtime_error {
  CallError(std::string code, std::string message, std::string detail)
      : std::runtime_error(message), code(std::move(code)), detail(std::move(detail)) {}
  std::string code;
  std::string detail;
};

class Module {
 public:
  Module() {
    auto init = frame::receive(0);
    if (!init || init->kind != frame::kInit) throw std::runtime_error("expected init frame");
    instance_ = init->header.value("instance", "");
    if (init->header.contains("config"))
      config_ = init->header["config"].get<std::map<std::string, std::string>>();
  }

  const std::string& instance() const { return instance_; }
  const std::map<std::string, std::string>& config() const { return config_; }
  std::string config_or(const std::string& key, std::string fallback) const {
    auto it = config_.find(key);
    return it == config_.end() ? std::move(fallback) : it->second;
  }

  std::vector<Entry> read(const std::string& port, std::int64_t lower, std::int64_t upper) {
    return entries(call({frame::kRead, {{"port", port}, {"lower", lower}, {"upper", upper}}, {}}));
  }
  std::vector<Entry> read_last_n(const std::string& port, std::size_t n) {
    return entries(call({frame::kReadLastN, {{"port", port}, {"n", n}}, {}}));
  }
  Entry read_event(const std::string& port) {
    auto list = entries(call({frame::kReadEvent, {{"port", port}}, {}}));
    if (list.size() != 1) throw std::runtime_error("read_event reply malformed");
    return list.front();
  }
  std::map<std::string, std::uint64_t> push(const std::string& port, std::string payload) {
    auto reply = call({frame::kPush, {{"port", port}}, std::move(payload)});
    return reply.header.at("ids").get<std::map<std::string, std::uint64_t>>();
  }
  Response network(const std::string& domain, const std::string& method, const std::string& path,
                   std::string body = {}) {
    auto reply = call(
        {frame::kNetwork, {{"domain", domain}, {"method", method}, {"path", path}}, std::move(body)});
    return {reply.header.value("status", 200), std::move(reply.blob)};
  }

  void complete() { frame::send(1, {frame::kComplete, nlohmann::json::object(), {}}); }
  void fail(const std::string& message) {
    frame::send(1, {frame::kFail, {{"message", message}}, {}});
  }

 private:
  frame::Frame call(const frame::Frame& request) {
    if (!frame::send(1, request)) throw std::runtime_error("hub connection closed");
    auto reply = frame::receive(0);
    if (!reply) throw std::runtime_error("hub connection closed");
    if (reply->kind == frame::kError)
      throw CallError(reply->header.value("code", ""), reply->header.value("message", ""),
                      reply->header.value("detail", ""));
    return std::move(*reply);
  }

  static std::vector<Entry> entries(const frame::Frame& reply) {
    std::vector<Entry> out;
    std::size_t off = 0;
    for (const auto& e : reply.header.at("entries")) {
      Entry x;
      x.id = e.at("id").get<std::uint64_t>();
      x.timestamp = e.at("ts").get<std::int64_t>();
      auto len = e.at("len").get<std::size_t>();
      x.payload = reply.blob.substr(off, len);
      off += len;
      out.push_back(std::move(x));
    }
    return out;
  }

  std::string instance_;
  std::map<std::string, std::string> config_;
};

/// Runs `body` with a connected Module and reports completion or failure.
template <typename F>
int run_module(F&& body) {
  try {
    Module m;
    try {
      body(m);
    } catch (const std::exception& e) {
      m.fail(e.what());
      return 1;
    }
    m.complete();
    return 0;
  } catch (const std::exception&) {
    return 2;
  }
}

}  // namespace karl::sdk
