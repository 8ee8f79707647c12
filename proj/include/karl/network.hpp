#pragma once

#include <map>
#include <string>

#include "karl/data_store.hpp"

namespace karl {

struct NetRequest {
  std::string method = "GET";
  std::string path = "/";
  Bytes body;
};

struct NetResponse {
  int status = 200;
  Bytes body;
};

/// Where mediated module traffic goes once the broker lets it out.
class NetworkTransport {
 public:
  virtual ~NetworkTransport() = default;
  /// Throws Transport when the domain cannot be reached.
  virtual NetResponse send(const std::string& domain, const NetRequest& request) = 0;
};

}  // namespace karl
