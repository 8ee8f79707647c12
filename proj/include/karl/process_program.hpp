#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include <sys/types.h>

#include "karl/runtime.hpp"

namespace karl {

/// Runs a packaged executable and serves its frame requests through the
/// module API it was given.
class ProcessProgram final : public ModuleProgram {
 public:
  ProcessProgram(std::filesystem::path executable, std::string instance,
                 std::map<std::string, std::string> config);
  ~ProcessProgram() override;

  void run(ModuleApi& api) override;
  void cancel() override;

  /// Factory for instances whose entrypoint names a file in the package.
  static ProgramFactory factory();

 private:
  void start();
  int reap();

  std::filesystem::path executable_;
  std::string instance_;
  std::map<std::string, std::string> config_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

}  // namespace karl
