// Operator CLI: runs the hub and scripts every console action over HTTP.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "karl/hub.hpp"
#include "karl/hub_http.hpp"
#include "karl/scenario.hpp"
#include "karl/sim.hpp"

using namespace karl;

namespace {

enum Exit { kOk = 0, kValidation = 2, kAuth = 3, kConflict = 4, kTransport = 5 };

int exit_code(Errc c) {
  switch (c) {
    case Errc::AuthFailure:
    case Errc::AccessDenied: return kAuth;
    case Errc::Transport:
    case Errc::TransferFailure: return kTransport;
    default: return kValidation;
  }
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct Globals {
  std::string hub = env_or("KARL_HUB", "127.0.0.1:8420");
  std::string token = env_or("KARL_TOKEN", "karl-admin");
  bool json = false;

  HubClient client() const { return HubClient(hub, token); }
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ValidationFailure, "cannot read " + path);
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ValidationFailure, path + " is not valid JSON");
  return j;
}

void print_json(const Json& j) { std::cout << j.dump(2) << '\n'; }

void print_registration(const Json& r) {
  std::cout << r["id"].get<std::string>() << "  " << r["kind"].get<std::string>() << ' '
            << (r["kind"] == "device" ? r["device"].get<std::string>()
                                      : r["edge"]["src"].get<std::string>() + " -> " +
                                            r["edge"]["dst"].get<std::string>())
            << "  " << r["status"].get<std::string>() << '\n';
  for (const auto& p : r["permissions"])
    std::cout << "    " << p["index"].get<std::size_t>() << ". " << p["text"].get<std::string>() << '\n';
}

// Conflicts and sacrifices are reported but the change stands.
int report_change(const Globals& g, const Json& r, bool policy_wording = false) {
  if (g.json) {
    print_json(r);
  } else {
    const auto& c = r["conflicts"];
    if (policy_wording) {
      std::cout << c.size() << (c.size() == 1 ? " conflict" : " conflicts");
      if (!c.empty()) {
        std::cout << ':';
        for (const auto& x : c) std::cout << "\n  " << x["permission"].get<std::string>();
      }
      std::cout << '\n';
    } else {
      std::cout << "version " << r["version"] << ", " << c.size()
                << (c.size() == 1 ? " conflict" : " conflicts") << '\n';
      for (const auto& x : c)
        std::cout << "  conflict: " << x["permission"].get<std::string>() << "  (exit policy on "
                  << x["policy_tag"].get<std::string>() << ": " << x["policy"].get<std::string>() << ")\n";
    }
    for (const auto& s : r["sacrificed"])
      std::cout << "  sacrificed: " << s["permission"].get<std::string>() << "  ("
                << s["reason"].get<std::string>() << ")\n";
  }
  return r["conflicts"].empty() && r["sacrificed"].empty() ? kOk : kConflict;
}

Json index_body(const std::vector<std::size_t>& allow, const std::vector<std::size_t>& deny,
                bool allow_all, bool deny_all) {
  Json b = Json::object();
  if (!allow.empty()) b["allow"] = allow;
  if (!deny.empty()) b["deny"] = deny;
  if (allow_all) b["allow_all"] = true;
  if (deny_all) b["deny_all"] = true;
  return b;
}

std::atomic<HubServer*> g_server{nullptr};

int run_hub(const Globals& g, const std::string& config_file, const std::string& data_dir,
            const std::string& host, int port) {
  std::optional<std::filesystem::path> cf, dd;
  if (!config_file.empty()) cf = config_file;
  if (!data_dir.empty()) dd = data_dir;
  auto config = load_hub_config(cf, dd);
  if (!host.empty()) config.listen_host = host;
  if (port >= 0) config.listen_port = port;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  SystemClock clock;
  Hub hub(config, clock);
  HubServer server(hub);
  int bound = server.start(config.listen_host, config.listen_port);
  hub.start_ticker();
  if (g.json)
    std::cout << Json{{"listening", {{"host", config.listen_host}, {"port", bound}}}}.dump() << std::endl;
  else
    std::cout << "listening on " << config.listen_host << ':' << bound << std::endl;

  int sig = 0;
  sigwait(&set, &sig);
  hub.stop_ticker();
  server.stop();
  hub.scheduler().drain();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"karl: smart-home hub and operator console"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--hub", g.hub, "hub address host:port (env KARL_HUB)");
  app.add_option("--token", g.token, "admin or device credential (env KARL_TOKEN)");
  app.add_flag("--json", g.json, "machine-readable output");

  std::function<int()> action;

  // hub run
  auto* hub_cmd = app.add_subcommand("hub", "run the hub service")->require_subcommand(1);
  std::string config_file, data_dir, listen_host;
  int listen_port = -1;
  auto* hub_run = hub_cmd->add_subcommand("run", "start serving");
  hub_run->add_option("--config", config_file, "JSON config file (env KARL_CONFIG)");
  hub_run->add_option("--data-dir", data_dir, "storage root");
  hub_run->add_option("--host", listen_host, "listen address");
  hub_run->add_option("--port", listen_port, "listen port, 0 for ephemeral");
  hub_run->callback([&] { action = [&] { return run_hub(g, config_file, data_dir, listen_host, listen_port); }; });

  // device
  auto* device = app.add_subcommand("device", "device registration and I/O")->require_subcommand(1);
  std::string fragment_file, fleet_name;
  auto* reg = device->add_subcommand("register", "submit a device fragment for review");
  reg->add_option("fragment", fragment_file, "fragment JSON file");
  reg->add_option("--fleet", fleet_name, "register a simulated fleet device by name");
  reg->callback([&] {
    action = [&] {
      Json fragment;
      if (!fleet_name.empty()) {
        PackageCatalog catalog;
        sim::install_reference_packages(catalog);
        fragment = to_json(sim::fragment(fleet_name, catalog));
      } else if (!fragment_file.empty()) {
        fragment = read_json_file(fragment_file);
        if (fragment.contains("fragment")) fragment = fragment["fragment"];
      } else {
        throw Error(Errc::ValidationFailure, "give a fragment file or --fleet <name>");
      }
      auto r = g.client().post("/device/register", {{"fragment", fragment}});
      if (g.json) {
        print_json(r);
      } else {
        print_registration(r);
        std::cout << "device token: " << r["token"].get<std::string>() << '\n';
      }
      return kOk;
    };
  });
  std::string dev_id, dev_port, dev_data, dev_file;
  auto* push = device->add_subcommand("push", "push a payload as a device (--token is the device token)");
  push->add_option("device", dev_id)->required();
  push->add_option("--port", dev_port)->required();
  push->add_option("--data", dev_data, "payload text");
  push->add_option("--file", dev_file, "payload file");
  push->callback([&] {
    action = [&] {
      std::string body = dev_data;
      if (!dev_file.empty()) {
        std::ifstream in(dev_file, std::ios::binary);
        if (!in) throw Error(Errc::ValidationFailure, "cannot read " + dev_file);
        body.assign(std::istreambuf_iterator<char>(in), {});
      }
      auto reply = g.client().request("POST", "/device/" + url_encode(dev_id) + "/push?port=" + url_encode(dev_port),
                                      body, "application/octet-stream");
      auto j = Json::parse(reply.body, nullptr, false);
      if (reply.status != 200) {
        if (!j.is_discarded() && j.contains("error"))
          throw Error(errc_from_string(j["error"]["code"].get<std::string>()).value_or(Errc::Transport),
                      j["error"]["message"], j["error"]["detail"]);
        throw Error(Errc::Transport, "push failed");
      }
      if (g.json)
        print_json(j);
      else
        for (const auto& [tag, id] : j["ids"].items()) std::cout << tag << ' ' << id << '\n';
      return kOk;
    };
  });
  std::string cursor;
  int poll_timeout = 0;
  auto* poll = device->add_subcommand("poll", "poll a device's inputs (--token is the device token)");
  poll->add_option("device", dev_id)->required();
  poll->add_option("--cursor", cursor, "port:id,... (default: every input from the start)");
  poll->add_option("--timeout-ms", poll_timeout, "long-poll wait");
  poll->callback([&] {
    action = [&] {
      auto j = g.client().get("/device/" + url_encode(dev_id) + "/inputs?cursor=" + url_encode(cursor) +
                              "&timeout_ms=" + std::to_string(poll_timeout));
      if (g.json) {
        print_json(j);
      } else {
        for (const auto& e : j["entries"])
          std::cout << e["port"].get<std::string>() << ' ' << e["id"] << ' ' << e["timestamp"] << ' '
                    << e["payload"].get<std::string>() << '\n';
      }
      return kOk;
    };
  });

  // registrations
  auto* regs = app.add_subcommand("registrations", "pending and past registrations")->require_subcommand(1);
  std::string status_filter;
  auto* regs_list = regs->add_subcommand("list", "list registrations with their permissions");
  regs_list->add_option("--status", status_filter, "pending, approved or rejected");
  regs_list->callback([&] {
    action = [&] {
      auto j = g.client().get("/registrations" + (status_filter.empty() ? std::string() : "?status=" + status_filter));
      if (g.json)
        print_json(j);
      else
        for (const auto& r : j) print_registration(r);
      return kOk;
    };
  });

  // permissions
  auto* perms = app.add_subcommand("permissions", "review pipeline permissions")->require_subcommand(1);
  std::string reg_id;
  std::vector<std::size_t> allow_idx, deny_idx;
  bool allow_all = false, deny_all = false, reject = false, numbered = false, verdicts = false;
  auto* decide = perms->add_subcommand("decide", "allow or deny the permissions of a registration");
  decide->add_option("registration", reg_id)->required();
  decide->add_option("--allow", allow_idx, "permission indices to allow");
  decide->add_option("--deny", deny_idx, "permission indices to deny");
  decide->add_flag("--allow-all", allow_all);
  decide->add_flag("--deny-all", deny_all);
  decide->add_flag("--reject", reject, "reject the registration outright");
  decide->callback([&] {
    action = [&] {
      Json body = reject ? Json{{"reject", true}} : index_body(allow_idx, deny_idx, allow_all, deny_all);
      return report_change(g, g.client().post("/registrations/" + url_encode(reg_id) + "/decisions", body));
    };
  });
  auto* plist = perms->add_subcommand("list", "live permissions, one per line");
  plist->add_flag("--numbered", numbered, "prefix the index used by revise");
  plist->add_flag("--verdicts", verdicts, "append the enforced verdict");
  plist->callback([&] {
    action = [&] {
      auto j = g.client().get("/permissions");
      if (g.json) {
        print_json(j);
        return kOk;
      }
      for (const auto& p : j) {
        if (numbered) std::cout << p["index"].get<std::size_t>() << ". ";
        std::cout << p["text"].get<std::string>();
        if (verdicts) std::cout << "  [" << p["verdict"].get<std::string>() << ']';
        std::cout << '\n';
      }
      return kOk;
    };
  });
  auto* revise = perms->add_subcommand("revise", "change earlier decisions by index (see list --numbered)");
  revise->add_option("--allow", allow_idx);
  revise->add_option("--deny", deny_idx);
  revise->callback([&] {
    action = [&] { return report_change(g, g.client().post("/permissions/revise", index_body(allow_idx, deny_idx, false, false))); };
  });

  // graph
  auto* graph = app.add_subcommand("graph", "dataflow graph")->require_subcommand(1);
  std::string link_src, link_dst;
  bool stateful = false, effective = false;
  auto* link = graph->add_subcommand("link", "propose an edge for review");
  link->add_option("src", link_src)->required();
  link->add_option("dst", link_dst)->required();
  link->add_flag("--stateful", stateful);
  link->callback([&] {
    action = [&] {
      auto r = g.client().post("/graph/edges", {{"src", link_src}, {"dst", link_dst}, {"stateful", stateful}});
      if (g.json)
        print_json(r);
      else
        print_registration(r);
      return kOk;
    };
  });
  auto* show = graph->add_subcommand("show", "print the graph JSON");
  show->add_flag("--effective", effective, "graph after enforcement, with overlay and verdicts");
  show->callback([&] {
    action = [&] {
      auto j = g.client().get("/graph");
      print_json(effective ? j : j["base"]);
      return kOk;
    };
  });

  // policy
  auto* policy = app.add_subcommand("policy", "exit policies")->require_subcommand(1);
  std::string ptag, pexpr;
  auto* pset = policy->add_subcommand("set", "attach an exit policy to a tag");
  pset->add_option("tag", ptag)->required();
  pset->add_option("expr", pexpr)->required();
  pset->callback([&] {
    action = [&] { return report_change(g, g.client().put("/policies", {{"tag", ptag}, {"expr", pexpr}}), true); };
  });
  policy->add_subcommand("list", "stored exit policies")->callback([&] {
    action = [&] {
      auto j = g.client().get("/policies");
      if (g.json)
        print_json(j);
      else
        for (const auto& p : j) std::cout << p["line"].get<std::string>() << '\n';
      return kOk;
    };
  });
  auto* premove = policy->add_subcommand("remove", "drop the exit policy on a tag");
  premove->add_option("tag", ptag)->required();
  premove->callback([&] {
    action = [&] { return report_change(g, g.client().del("/policies?tag=" + url_encode(ptag)), true); };
  });
  auto* pcheck = policy->add_subcommand("check", "parse an expression without storing it");
  std::vector<std::string> check_modules;
  pcheck->add_option("expr", pexpr)->required();
  pcheck->add_option("--modules", check_modules, "also test a module sequence against it")->delimiter(',');
  pcheck->callback([&] {
    action = [&] {
      Json body{{"expr", pexpr}};
      if (!check_modules.empty()) body["modules"] = check_modules;
      auto j = g.client().post("/policies/parse", body);
      if (g.json) {
        print_json(j);
      } else if (j["ok"].get<bool>()) {
        std::cout << j["expr"].get<std::string>();
        if (j.contains("satisfied")) std::cout << (j["satisfied"].get<bool>() ? "  satisfied" : "  not satisfied");
        std::cout << '\n';
      } else {
        std::cout << "syntax error at offset " << j["error"]["detail"].get<std::string>() << ": "
                  << j["error"]["message"].get<std::string>() << '\n';
      }
      return j["ok"].get<bool>() ? kOk : kValidation;
    };
  });

  // audit, metrics
  auto* audit = app.add_subcommand("audit", "network and denial records")->require_subcommand(1);
  std::string akind, ainstance, adomain;
  std::size_t alimit = 0;
  auto* tail = audit->add_subcommand("tail", "print audit records");
  tail->add_option("--kind", akind, "network, denied, failure or exhausted");
  tail->add_option("--instance", ainstance);
  tail->add_option("--domain", adomain);
  tail->add_option("--limit", alimit, "most recent N");
  tail->callback([&] {
    action = [&] {
      std::string q;
      auto add = [&](const std::string& k, const std::string& v) {
        if (!v.empty()) q += (q.empty() ? "?" : "&") + k + "=" + url_encode(v);
      };
      add("kind", akind);
      add("instance", ainstance);
      add("domain", adomain);
      auto j = g.client().get("/audit" + q);
      if (alimit && j.size() > alimit) j.erase(j.begin(), j.end() - static_cast<long>(alimit));
      if (g.json) {
        print_json(j);
        return kOk;
      }
      for (const auto& r : j) {
        std::cout << r["seq"] << ' ' << r["timestamp"] << ' ' << r["kind"].get<std::string>() << ' '
                  << r["instance"].get<std::string>();
        if (!r["domain"].get<std::string>().empty()) std::cout << " -> " << r["domain"].get<std::string>();
        if (!r["detail"].get<std::string>().empty()) std::cout << "  " << r["detail"].get<std::string>();
        std::cout << '\n';
        for (const auto& p : r["pipelines"]) std::cout << "    via " << p.get<std::string>() << '\n';
      }
      return kOk;
    };
  });
  app.add_subcommand("metrics", "scheduler and mediation metrics")->callback([&] {
    action = [&] {
      print_json(g.client().get("/metrics"));
      return kOk;
    };
  });

  // module spawn
  auto* module = app.add_subcommand("module", "module instances")->require_subcommand(1);
  std::string instance_id, app_device;
  auto* spawn = module->add_subcommand("spawn", "trigger a manual run");
  spawn->add_option("instance", instance_id)->required();
  spawn->add_option("--app", app_device, "spawn on behalf of a device app");
  spawn->callback([&] {
    action = [&] {
      auto j = g.client().post("/modules/" + url_encode(instance_id) + "/spawn" +
                                   (app_device.empty() ? std::string() : "?app=" + url_encode(app_device)),
                               Json::object());
      if (g.json)
        print_json(j);
      else
        std::cout << "queued " << instance_id << " at position " << j["position"] << '\n';
      return kOk;
    };
  });

  // scenario, fleet
  auto* scenario = app.add_subcommand("scenario", "scripted runs on simulated time")->require_subcommand(1);
  std::string scenario_file, scenario_dir;
  auto* srun = scenario->add_subcommand("run", "run a scenario file in-process");
  srun->add_option("file", scenario_file)->required();
  srun->add_option("--data-dir", scenario_dir, "persist the hub state of the run");
  srun->callback([&] {
    action = [&] {
      std::optional<std::filesystem::path> dd;
      if (!scenario_dir.empty()) dd = scenario_dir;
      auto report = run_scenario_file(scenario_file, dd);
      if (g.json)
        print_json(report.to_json());
      else
        std::cout << report.text();
      return report.ok() ? kOk : 1;
    };
  });
  auto* fleet = app.add_subcommand("fleet", "simulated fleet")->require_subcommand(1);
  std::string fleet_show_name;
  auto* fshow = fleet->add_subcommand("show", "print a fleet fragment, or list names");
  fshow->add_option("name", fleet_show_name);
  fshow->callback([&] {
    action = [&] {
      if (fleet_show_name.empty()) {
        for (const auto& n : sim::fragment_names()) std::cout << n << '\n';
        return kOk;
      }
      PackageCatalog catalog;
      sim::install_reference_packages(catalog);
      print_json(to_json(sim::fragment(fleet_show_name, catalog)));
      return kOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kValidation;
  }
  try {
    return action ? action() : kValidation;
  } catch (const Error& e) {
    std::cerr << error_json(e).dump() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << error_json(Error(Errc::ValidationFailure, e.what())).dump() << '\n';
    return kValidation;
  }
}
