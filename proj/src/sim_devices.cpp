#include "karl/sim.hpp"

namespace karl::sim {

SimDevice::SimDevice(std::string id, std::vector<Emitter> emitters, std::vector<std::string> inputs)
    : id_(std::move(id)), emitters_(std::move(emitters)), inputs_(std::move(inputs)) {}

std::size_t SimDevice::step(DeviceLink& link, Millis now) {
  std::size_t pushed = 0;
  for (const auto& e : emitters_) {
    auto [it, first] = next_.try_emplace(e.port, now);
    if (now < it->second) continue;
    link.push(e.port, e.payload(emitted_));
    ++emitted_;
    ++pushed;
    it->second = now + e.period.count();
  }
  return pushed;
}

std::size_t SimDevice::poll(DeviceLink& link) {
  std::size_t n = 0;
  for (const auto& port : inputs_) {
    auto& cursor = cursors_[port];
    for (auto& e : link.poll(port, cursor)) {
      cursor = std::max(cursor, e.id);
      state_[port] = std::move(e.payload);
      ++n;
    }
  }
  return n;
}

std::map<std::string, Bytes> SimDevice::state() const { return state_; }

SimDevice camera_device(Duration period, std::function<std::string(std::uint64_t)> label,
                        std::uint64_t seed) {
  return SimDevice("camera",
                   {{"motion", period,
                     [label, seed](std::uint64_t n) { return image_payload(label(n), seed + n); }}},
                   {"firmware", "livestream"});
}

SimDevice speaker_device(Duration period, std::function<std::string(std::uint64_t)> utterance,
                         std::uint64_t seed) {
  return SimDevice(
      "speaker",
      {{"speech_command", period,
        [utterance, seed](std::uint64_t n) { return speech_payload(utterance(n), seed + n); }}},
      {});
}

SimDevice light_device() { return SimDevice("light", {}, {"state", "intensity", "on"}); }

}  // namespace karl::sim
