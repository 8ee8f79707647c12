#include "karl/sim.hpp"

namespace karl::sim {

namespace {

ModuleInstance instance(const PackageCatalog& catalog, std::string id, const std::string& name,
                        Schedule schedule = Schedule::on_push(),
                        std::map<std::string, std::string> config = {}) {
  ModuleInstance m;
  m.id = std::move(id);
  m.manifest = catalog.manifest(name).value_or(reference_manifest(name));
  m.schedule = schedule;
  m.network_grant = {m.manifest.domains.begin(), m.manifest.domains.end()};
  m.config = std::move(config);
  return m;
}

void add(DataflowGraph& g, ModuleInstance m) { g.modules.emplace(m.id, std::move(m)); }

void add(DataflowGraph& g, DeviceDescriptor d) { g.devices.emplace(d.id, std::move(d)); }

void link(DataflowGraph& g, NodeId src, NodeId dst,
          Statefulness s = Statefulness::stateless) {
  g.edges.insert({std::move(src), std::move(dst), s});
}

constexpr Duration kDaily{86400000};

DataflowGraph camera_base(const PackageCatalog& catalog) {
  DataflowGraph g;
  DeviceDescriptor camera;
  camera.id = "camera";
  camera.outputs = {{"motion", "png", "frame captured on motion"},
                    {"livestream", "h264", "live video"}};
  camera.inputs = {{"firmware", "firmware", "firmware image to install"},
                   {"livestream", "bit", "1 starts the livestream, 0 stops it"}};
  camera.app = AppSpec{"camera-app",
                       {"camera.motion", "camera.livestream", "query.result"},
                       {},
                       {"livestream_on", "livestream_off", "query"}};
  add(g, camera);
  add(g, instance(catalog, "person_detection", "person_detection"));
  add(g, instance(catalog, "statistics", "statistics"));
  add(g, instance(catalog, "firmware", "firmware_update", Schedule::interval(kDaily)));
  add(g, instance(catalog, "query", "query", Schedule::manual()));
  add(g, instance(catalog, "livestream_on", "set_true", Schedule::manual()));
  add(g, instance(catalog, "livestream_off", "set_false", Schedule::manual()));
  link(g, device_output("camera", "motion"), module_input("person_detection", "image"));
  link(g, device_output("camera", "motion"), module_input("query", "image_data"),
       Statefulness::stateful);
  link(g, module_output("firmware", "firmware"), device_input("camera", "firmware"));
  link(g, module_output("livestream_on", "true"), device_input("camera", "livestream"));
  link(g, module_output("livestream_off", "false"), device_input("camera", "livestream"));
  return g;
}

}  // namespace

DataflowGraph light_fragment(const PackageCatalog& catalog) {
  DataflowGraph g;
  DeviceDescriptor light;
  light.id = "light";
  light.outputs = {{"state", "bit", "current on/off state"},
                   {"intensity", "percent", "current brightness"}};
  light.inputs = {{"state", "bit", "1 to turn on, 0 to turn off"},
                  {"intensity", "percent", "brightness to set"},
                  {"on", "bit", "toggle from the app"}};
  light.app = AppSpec{"light-app",
                      {"light.state", "light.intensity"},
                      {"#light.intensity"},
                      {"set_true", "set_false"}};
  add(g, light);
  add(g, instance(catalog, "set_true", "set_true", Schedule::manual()));
  add(g, instance(catalog, "set_false", "set_false", Schedule::manual()));
  link(g, module_output("set_true", "true"), device_input("light", "on"));
  link(g, module_output("set_false", "false"), device_input("light", "on"));
  return g;
}

DataflowGraph speaker_fragment(const PackageCatalog& catalog) {
  DataflowGraph g;
  DeviceDescriptor speaker;
  speaker.id = "speaker";
  speaker.outputs = {{"speech_command", "wav", "recorded voice command"}};
  speaker.app = AppSpec{"speaker-app", {"weather.weather"}, {}, {}};
  add(g, speaker);
  add(g, instance(catalog, "speech_to_intent", "speech_to_intent"));
  add(g, instance(catalog, "weather", "weather"));
  add(g, instance(catalog, "light_switch", "light_switch"));
  link(g, device_output("speaker", "speech_command"), module_input("speech_to_intent", "speech"));
  link(g, module_output("speech_to_intent", "weather_intent"),
       module_input("weather", "weather_intent"));
  link(g, module_output("speech_to_intent", "light_intent"),
       module_input("light_switch", "light_intent"));
  return g;
}

DataflowGraph camera_fragment(const PackageCatalog& catalog) {
  auto g = camera_base(catalog);
  link(g, module_output("person_detection", "training_data"), module_input("statistics", "data"));
  return g;
}

DataflowGraph camera_anonymized_fragment(const PackageCatalog& catalog) {
  auto g = camera_base(catalog);
  add(g, instance(catalog, "boolean", "boolean", Schedule::on_push(), {{"invert", "true"}}));
  link(g, module_output("person_detection", "training_data"), module_input("boolean", "input"));
  link(g, module_output("boolean", "output"), module_input("statistics", "data"));
  return g;
}

DataflowGraph camera_prio_fragment(const PackageCatalog& catalog) {
  auto g = camera_base(catalog);
  g.modules.erase("statistics");
  add(g, instance(catalog, "prio", "prio"));
  link(g, module_output("person_detection", "training_data"), module_input("prio", "input"));
  return g;
}

DataflowGraph occupancy_fragment() {
  DataflowGraph g;
  DeviceDescriptor sensor;
  sensor.id = "occupancy_sensor";
  sensor.outputs = {{"at_home", "bit", "1 while someone is home"}};
  add(g, sensor);
  return g;
}

Edge speech_light_link() {
  return {module_output("light_switch", "state"), device_input("light", "state"),
          Statefulness::stateless};
}

Edge occupancy_link() {
  return {device_output("occupancy_sensor", "at_home"), module_input("boolean", "condition"),
          Statefulness::stateful};
}

std::vector<std::string> fragment_names() {
  return {"light", "speaker", "camera", "camera_anonymized", "camera_prio", "occupancy_sensor"};
}

DataflowGraph fragment(const std::string& name, const PackageCatalog& catalog) {
  if (name == "light") return light_fragment(catalog);
  if (name == "speaker") return speaker_fragment(catalog);
  if (name == "camera") return camera_fragment(catalog);
  if (name == "camera_anonymized") return camera_anonymized_fragment(catalog);
  if (name == "camera_prio") return camera_prio_fragment(catalog);
  if (name == "occupancy_sensor") return occupancy_fragment();
  throw Error(Errc::InvalidArgument, "no fleet fragment '" + name + "'", name);
}

}  // namespace karl::sim
