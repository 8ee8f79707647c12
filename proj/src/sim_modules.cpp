#include <random>

#include "karl/graph_json.hpp"
#include "karl/sim.hpp"

namespace karl::sim {

namespace {

Port port(std::string name, std::string type, std::string description = {}) {
  return {std::move(name), std::move(type), std::move(description)};
}

ModuleManifest manifest(std::string name, std::vector<Port> inputs, std::vector<Port> outputs,
                        std::vector<std::string> domains) {
  ModuleManifest m;
  m.entrypoint = "builtin:" + name;
  m.name = std::move(name);
  m.inputs = std::move(inputs);
  m.outputs = std::move(outputs);
  m.domains = std::move(domains);
  return m;
}

const std::map<std::string, std::uint64_t>& default_sizes() {
  static const std::map<std::string, std::uint64_t> sizes{
      {"boolean", 2000},          {"firmware_update", 2000}, {"light_switch", 2000},
      {"person_detection", 981000}, {"speech_to_intent", 38000}, {"query", 2100},
      {"set_true", 2000},         {"set_false", 2000},       {"statistics", 2000},
      {"weather", 2100},          {"prio", 2000},
  };
  return sizes;
}

Bytes filler(std::uint64_t seed, std::size_t size) {
  std::mt19937_64 rng(seed);
  Bytes out(size, '\0');
  std::size_t i = 0;
  while (i < size) {
    auto v = rng();
    for (int b = 0; b < 8 && i < size; ++b, ++i) out[i] = static_cast<char>((v >> (8 * b)) & 0xff);
  }
  return out;
}

Bytes labelled(std::string_view kind, const std::string& label, std::uint64_t seed,
               std::size_t size) {
  Bytes head = "KARL" + std::string(kind) + ":" + label + "\n";
  if (head.size() >= size) return head;
  return head + filler(seed, size - head.size());
}

bool truthy(std::string_view payload) {
  return payload == "1" || payload == "true" || payload == "on" || payload == "\x01" ||
         payload == "[1]";
}

long long config_int(const std::map<std::string, std::string>& config, const std::string& key,
                     long long fallback) {
  auto it = config.find(key);
  if (it == config.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    return fallback;
  }
}

/// Reference module body: gets the API and the instance config.
using Body = std::function<void(ModuleApi&, const std::map<std::string, std::string>&)>;

ProgramFactory stub(Body body) {
  return [body](const ProgramSpec& spec) -> std::unique_ptr<ModuleProgram> {
    auto config = spec.instance.config;
    return std::make_unique<FunctionProgram>([body, config](ModuleApi& api) {
      if (auto init = config_int(config, "init_ms", 0); init > 0) api.clock().sleep_for(Duration{init});
      body(api, config);
    });
  };
}

void compute(ModuleApi& api, const std::map<std::string, std::string>& config) {
  if (auto ms = config_int(config, "compute_ms", 0); ms > 0) api.clock().sleep_for(Duration{ms});
}

}  // namespace

const std::vector<std::string>& reference_module_names() {
  static const std::vector<std::string> names{
      "boolean", "firmware_update", "light_switch", "person_detection", "speech_to_intent",
      "query",   "set_true",        "set_false",    "statistics",       "weather",
      "prio"};
  return names;
}

ModuleManifest reference_manifest(const std::string& name) {
  if (name == "boolean")
    return manifest(name,
                    {port("condition", "bit", "forward only while truthy"),
                     port("input", "", "data to gate")},
                    {port("output", "", "input, when the condition holds")}, {});
  if (name == "firmware_update")
    return manifest(name, {}, {port("firmware", "firmware", "latest firmware image")},
                    {"firmware.com"});
  if (name == "light_switch")
    return manifest(name, {port("light_intent", "json", "{type: \"light\", state: <state>}")},
                    {port("state", "bit", "1 to turn on, 0 to turn off")}, {});
  if (name == "person_detection")
    return manifest(name, {port("image", "png", "camera frame")},
                    {port("training_data", "png", "frames containing people"),
                     port("count", "json", "number of people seen")},
                    {});
  if (name == "speech_to_intent")
    return manifest(name, {port("speech", "wav", "recorded command")},
                    {port("weather_intent", "json"), port("light_intent", "json")}, {});
  if (name == "query")
    return manifest(name, {port("image_data", "png", "recorded motion events")},
                    {port("result", "json")}, {});
  if (name == "set_true") return manifest(name, {}, {port("true", "bit")}, {});
  if (name == "set_false") return manifest(name, {}, {port("false", "bit")}, {});
  if (name == "statistics")
    return manifest(name, {port("data", "", "samples to upload")}, {}, {"statistics.com"});
  if (name == "weather")
    return manifest(name, {port("weather_intent", "json")}, {port("weather", "json")},
                    {"weather.com"});
  if (name == "prio")
    return manifest(name, {port("input", "", "value to split into shares")}, {},
                    {"a.statistics.com", "b.statistics.com", "c.statistics.com"});
  throw Error(Errc::InvalidArgument, "no reference module '" + name + "'", name);
}

void install_reference_packages(PackageCatalog& catalog, const CatalogOptions& options) {
  std::uint64_t n = 0;
  for (const auto& name : reference_module_names()) {
    auto size = default_sizes().at(name);
    if (auto it = options.package_bytes.find(name); it != options.package_bytes.end())
      size = it->second;
    catalog.add(make_package(reference_manifest(name),
                             {{"module.bin", filler(options.seed * 1000 + n++, size)}}));
  }
}

Bytes image_payload(const std::string& label, std::uint64_t seed, std::size_t size) {
  return labelled("PNG", label, seed, size);
}

Bytes speech_payload(const std::string& utterance, std::uint64_t seed, std::size_t size) {
  return labelled("WAV", utterance, seed, size);
}

std::string payload_label(std::string_view payload) {
  if (payload.size() < 8 || payload.substr(0, 4) != "KARL" || payload[7] != ':') return {};
  auto end = payload.find('\n', 8);
  return std::string(payload.substr(8, end == std::string_view::npos ? end : end - 8));
}

std::optional<std::pair<std::string, std::string>> intent_for(const std::string& utterance) {
  static const std::map<std::string, std::pair<std::string, std::string>> table{
      {"turn on the light", {"light_intent", R"({"state":"on","type":"light"})"}},
      {"turn off the light", {"light_intent", R"({"state":"off","type":"light"})"}},
      {"what is the weather", {"weather_intent", R"({"location":"home","type":"weather"})"}},
      {"will it rain today", {"weather_intent", R"({"location":"home","type":"weather"})"}},
  };
  auto it = table.find(utterance);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

ProgramFactory reference_program(const std::string& name) {
  using Config = std::map<std::string, std::string>;
  if (name == "boolean")
    return stub([](ModuleApi& api, const Config& config) {
      auto input = api.read_event("input");
      bool condition = false;
      try {
        auto last = api.read_last_n("condition", 1);
        condition = !last.empty() && truthy(last.back().payload);
      } catch (const Error&) {
      }
      if (config.count("invert") && truthy(config.at("invert"))) condition = !condition;
      compute(api, config);
      if (condition) api.push("output", std::move(input.payload));
    });
  if (name == "firmware_update")
    return stub([](ModuleApi& api, const Config& config) {
      auto resp = api.network("firmware.com", {"GET", "/latest", {}});
      compute(api, config);
      if (resp.status == 200) api.push("firmware", std::move(resp.body));
    });
  if (name == "light_switch")
    return stub([](ModuleApi& api, const Config& config) {
      auto intent = Json::parse(api.read_event("light_intent").payload, nullptr, false);
      compute(api, config);
      if (intent.is_discarded() || !intent.is_object()) return;
      auto state = intent.value("state", "");
      if (state == "on") api.push("state", "1");
      if (state == "off") api.push("state", "0");
    });
  if (name == "person_detection")
    return stub([](ModuleApi& api, const Config& config) {
      auto image = api.read_event("image");
      compute(api, config);
      auto label = payload_label(image.payload);
      int people = label.rfind("person", 0) == 0 ? 1 : 0;
      if (auto colon = label.find(':'); people && colon != std::string::npos)
        people = std::stoi(label.substr(colon + 1));
      api.push("count", Json{{"people", people}}.dump());
      if (people > 0) api.push("training_data", std::move(image.payload));
    });
  if (name == "speech_to_intent")
    return stub([](ModuleApi& api, const Config& config) {
      auto speech = api.read_event("speech");
      compute(api, config);
      if (auto intent = intent_for(payload_label(speech.payload)))
        api.push(intent->first, intent->second);
    });
  if (name == "query")
    return stub([](ModuleApi& api, const Config& config) {
      const Millis now = api.clock().now_ms();
      const Millis window = config_int(config, "window_ms", 86400000);
      auto events = api.read("image_data", now - window, now);
      compute(api, config);
      Json result{{"events", events.size()}};
      if (!events.empty()) result["latest"] = events.back().timestamp;
      api.push("result", result.dump());
    });
  if (name == "set_true")
    return stub([](ModuleApi& api, const Config&) { api.push("true", "1"); });
  if (name == "set_false")
    return stub([](ModuleApi& api, const Config&) { api.push("false", "0"); });
  if (name == "statistics")
    return stub([](ModuleApi& api, const Config& config) {
      auto data = api.read_event("data");
      compute(api, config);
      api.network("statistics.com", {"POST", "/upload", std::move(data.payload)});
    });
  if (name == "weather")
    return stub([](ModuleApi& api, const Config& config) {
      auto intent = api.read_event("weather_intent");
      auto resp = api.network("weather.com", {"GET", "/forecast", intent.payload});
      compute(api, config);
      api.push("weather", std::move(resp.body));
    });
  if (name == "prio")
    return stub([](ModuleApi& api, const Config& config) {
      auto input = api.read_event("input");
      compute(api, config);
      // Two random shares plus the XOR remainder.
      Bytes a = filler(input.id * 2 + 1, input.payload.size());
      Bytes b = filler(input.id * 2 + 2, input.payload.size());
      Bytes c = input.payload;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<char>(c[i] ^ a[i] ^ b[i]);
      api.network("a.statistics.com", {"POST", "/share", std::move(a)});
      api.network("b.statistics.com", {"POST", "/share", std::move(b)});
      api.network("c.statistics.com", {"POST", "/share", std::move(c)});
    });
  throw Error(Errc::InvalidArgument, "no reference module '" + name + "'", name);
}

void register_reference_programs(ModuleHost& host) {
  for (const auto& name : reference_module_names())
    host.register_program("builtin:" + name, reference_program(name));
}

}  // namespace karl::sim
