// Process module used by the runtime tests: echoes its input after the
// configured transform, then optionally calls out.

#include <stdexcept>

#include "karl/module_sdk.hpp"

int main() {
  return karl::sdk::run_module([](karl::sdk::Module& m) {
    auto mode = m.config_or("mode", "echo");
    if (mode == "fail") throw std::runtime_error("asked to fail");
    if (mode == "history") {
      m.read_last_n(m.config_or("port", "input"), 5);
      return;
    }
    auto in = m.read_event(m.config_or("port", "input"));
    std::string out = in.payload;
    if (mode == "upper")
      for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    m.push(m.config_or("out", "output"), out);
    if (auto domain = m.config_or("domain", ""); !domain.empty()) m.network(domain, "POST", "/", out);
  });
}
