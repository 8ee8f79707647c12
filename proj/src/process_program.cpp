#include "karl/process_program.hpp"

#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "karl/frame.hpp"

namespace karl {

ProcessProgram::ProcessProgram(std::filesystem::path executable, std::string instance,
                               std::map<std::string, std::string> config)
    : executable_(std::move(executable)), instance_(std::move(instance)), config_(std::move(config)) {}

ProcessProgram::~ProcessProgram() {
  cancel();
  reap();
}

ProgramFactory ProcessProgram::factory() {
  return [](const ProgramSpec& spec) -> std::unique_ptr<ModuleProgram> {
    if (spec.package_dir.empty())
      throw Error(Errc::ExecutionFailure, "worker keeps no unpacked packages on disk");
    return std::make_unique<ProcessProgram>(spec.package_dir / spec.instance.manifest.entrypoint,
                                            spec.instance.id, spec.instance.config);
  };
}

void ProcessProgram::start() {
  int in[2], out[2];
  if (::pipe2(in, O_CLOEXEC) != 0 || ::pipe2(out, O_CLOEXEC) != 0)
    throw Error(Errc::ExecutionFailure, std::string("pipe: ") + std::strerror(errno));
  pid_t pid = ::fork();
  if (pid < 0) throw Error(Errc::ExecutionFailure, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in[0], 0);
    ::dup2(out[1], 1);
    ::execl(executable_.c_str(), executable_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in[0]);
  ::close(out[1]);
  std::lock_guard lock(mutex_);
  pid_ = pid;
  to_child_ = in[1];
  from_child_ = out[0];
}

int ProcessProgram::reap() {
  pid_t pid;
  {
    std::lock_guard lock(mutex_);
    pid = pid_;
    pid_ = -1;
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
  }
  if (pid <= 0) return 0;
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  return status;
}

void ProcessProgram::cancel() {
  std::lock_guard lock(mutex_);
  if (pid_ > 0) ::kill(pid_, SIGKILL);
}

namespace {

frame::Frame entries_reply(const std::vector<Entry>& entries) {
  frame::Frame f;
  f.kind = frame::kOk;
  auto list = Json::array();
  for (const auto& e : entries) {
    list.push_back({{"id", e.id}, {"ts", e.timestamp}, {"len", e.payload.size()}});
    f.blob += e.payload;
  }
  f.header = {{"entries", list}};
  return f;
}

frame::Frame serve(ModuleApi& api, const frame::Frame& req) {
  const auto& h = req.header;
  switch (req.kind) {
    case frame::kRead:
      return entries_reply(api.read(h.at("port").get<std::string>(), h.at("lower").get<Millis>(),
                                    h.at("upper").get<Millis>()));
    case frame::kReadLastN:
      return entries_reply(
          api.read_last_n(h.at("port").get<std::string>(), h.at("n").get<std::size_t>()));
    case frame::kReadEvent:
      return entries_reply({api.read_event(h.at("port").get<std::string>())});
    case frame::kPush: {
      auto ids = api.push(h.at("port").get<std::string>(), req.blob);
      return {frame::kOk, {{"ids", ids}}, {}};
    }
    case frame::kNetwork: {
      NetRequest r{h.value("method", "GET"), h.value("path", "/"), req.blob};
      auto resp = api.network(h.at("domain").get<std::string>(), r);
      return {frame::kOk, {{"status", resp.status}}, std::move(resp.body)};
    }
    default:
      throw Error(Errc::ExecutionFailure,
                  std::string("unexpected frame kind '") + req.kind + "' from module");
  }
}

}  // namespace

void ProcessProgram::run(ModuleApi& api) {
  std::signal(SIGPIPE, SIG_IGN);
  start();
  frame::send(to_child_, {frame::kInit, {{"instance", instance_}, {"config", config_}}, {}});
  for (;;) {
    std::optional<frame::Frame> req;
    try {
      req = frame::receive(from_child_);
    } catch (const std::exception& e) {
      cancel();
      reap();
      throw Error(Errc::ExecutionFailure, std::string("bad frame from module: ") + e.what());
    }
    if (!req) break;
    if (req->kind == frame::kComplete) break;
    if (req->kind == frame::kFail) {
      reap();
      throw Error(Errc::ExecutionFailure, req->header.value("message", "module failed"));
    }
    frame::Frame reply;
    try {
      reply = serve(api, *req);
    } catch (const Error& e) {
      if (e.code() == Errc::Cancelled) {
        cancel();
        reap();
        throw;
      }
      reply = {frame::kError,
               {{"code", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}},
               {}};
    } catch (const std::exception& e) {
      reply = {frame::kError, {{"code", "ExecutionFailure"}, {"message", e.what()}}, {}};
    }
    frame::send(to_child_, reply);
  }
  int status = reap();
  if (WIFSIGNALED(status))
    throw Error(Errc::ExecutionFailure, "module killed by signal " + std::to_string(WTERMSIG(status)));
  if (WIFEXITED(status) && WEXITSTATUS(status) != 0)
    throw Error(Errc::ExecutionFailure, "module exited with status " +
                                            std::to_string(WEXITSTATUS(status)));
}

}  // namespace karl
