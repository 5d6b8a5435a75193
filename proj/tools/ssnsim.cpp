#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssn/controller.hpp"
#include "ssn/energy.hpp"
#include "ssn/errors.hpp"
#include "ssn/netsim.hpp"
#include "ssn/proto.hpp"
#include "ssn/scenario.hpp"
#include "ssn/sim.hpp"
#include "ssn/store.hpp"

namespace {

using namespace ssn;

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitUsage = 2;

energy::CurrentDraws draws_from(const std::string& profile) {
  return profile.empty() ? energy::CurrentDraws{} : energy::load_profile(profile);
}

proto::AppKind parse_app_arg(const std::string& text) {
  if (auto k = proto::app_from_name(text)) return *k;
  if (auto k = proto::app_from_tag(text)) return *k;
  std::string upper = text;
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (auto k = proto::app_from_tag(upper)) return *k;
  throw Error("unknown application '" + text + "'");
}

int cmd_run(const std::string& scenario_path, const std::string& data_dir, double duration_s,
            uint64_t seed, const std::string& profile) {
  scn::Scenario sc = scn::load_scenario(scenario_path);
  if (sc.nodes.empty()) {
    std::filesystem::create_directories(data_dir);
    net::EventLog log;
    log.set_seed(seed);
    log.write_to(data_dir + "/events.log");
    std::cout << "empty scenario: nothing to simulate\n";
    return kExitOk;
  }
  energy::CurrentDraws draws = draws_from(profile);
  store::Store db(data_dir);
  net::EventLog log;
  sim::SimOptions opt;
  opt.duration_ms = std::llround(duration_s * 1000.0);
  opt.seed = seed;
  sim::Simulation s(sc, &db, &draws, &log, opt);
  s.run();
  log.write_to(data_dir + "/events.log");

  db.validate();
  sim::check_frame_conservation(log.lines());
  sim::check_ed_isolation(log.lines(), s.topology());
  std::vector<std::string> mismatches = s.store_mismatches();
  if (!mismatches.empty()) {
    for (const std::string& m : mismatches) std::cerr << "store mismatch: " << m << "\n";
    return kExitInvariant;
  }
  std::cout << "scenario " << scenario_path << ": " << log.lines().size() << " log lines, "
            << s.network().injected() << " frames injected, " << s.network().delivered()
            << " delivered, " << s.network().dropped() << " dropped\n"
            << "event log: " << data_dir << "/events.log\n";
  if (!s.controller().failures().empty()) {
    for (const std::string& f : s.controller().failures())
      std::cout << "controller failure: " << f << "\n";
  }
  return kExitOk;
}

int cmd_report_update_times() {
  net::LinkModel lm;
  std::printf("firmware\tframes\tsize_bytes\tbytes_sent\ttime_s\trate_kbps\n");
  for (int fw : {1, 3, 7, 15}) {
    net::TransferDescriptor d = net::descriptor_for(proto::FirmwareId(fw), lm);
    net::TransferTiming t = net::ota_transfer(d, lm);
    std::printf("%d\t%ld\t%ld\t%ld\t%.2f\t%.2f\n", fw, d.frames, d.size_bytes, d.bytes_sent(),
                t.duration_s, t.effective_rate_bps / 1000.0);
  }
  return kExitOk;
}

int cmd_report_lifetimes(const std::string& profile) {
  energy::CurrentDraws draws = draws_from(profile);
  std::printf("role\tmean_current_mA\tlifetime_days\n");
  for (energy::Role role : {energy::Role::Router, energy::Role::EndDevice}) {
    energy::NodeEnergyConfig cfg;
    cfg.role = role;
    cfg.apps = {{proto::AppKind::Temperature, 10u}};
    cfg.listen_interval_min = 1;
    std::printf("%s\t%.5f\t%.2f\n", role == energy::Role::Router ? "router" : "end_device",
                energy::energy_rate(cfg, draws), energy::lifetime_days(cfg, draws));
  }
  return kExitOk;
}

int cmd_report_monitor(const std::string& data_dir) {
  if (data_dir.empty()) throw MissingData("report monitor needs --data-dir");
  store::Store db(data_dir);
  std::printf("register_id,device_id,firmware_id,timestamp_ms,temperature,humidity,luminosity,presence,battery_pct\n");
  for (const store::RegisterRow& r :
       db.registers_in_range(0, std::numeric_limits<int64_t>::max())) {
    std::printf("%ld,%d,%d,%lld", r.id, r.device_id, r.firmware_id,
                static_cast<long long>(r.timestamp_ms));
    for (proto::AppKind k : proto::kAllApps) {
      auto it = r.readings.find(k);
      if (it != r.readings.end())
        std::printf(",%d", it->second);
      else
        std::printf(",");
    }
    std::printf(",%d\n", r.battery_pct);
  }
  return kExitOk;
}

int cmd_codec(const std::string& mode, const std::vector<std::string>& args) {
  if (mode == "decode") {
    if (args.size() != 1) throw Error("codec decode needs exactly one frame string");
    proto::Frame f = proto::decode_frame(args[0]);
    std::cout << "tag: " << proto::frame_tag(f) << "\n";
    if (const auto* upd = std::get_if<proto::ScheduleUpdateFrame>(&f)) {
      const proto::Schedule& s = upd->schedule;
      std::cout << "events_per_cycle: " << s.event_count() << "\n";
      std::cout << "intervals:";
      for (uint32_t g : s.intervals()) std::cout << ' ' << g;
      std::cout << "\nindices:";
      for (proto::FirmwareId m : s.indices()) std::cout << ' ' << m.value();
      std::cout << "\n";
      for (proto::AppKind k : proto::kAllApps) {
        if (auto iv = s.interval_of(k))
          std::cout << "  " << proto::app_name(k) << " every " << *iv << " s\n";
      }
    } else if (const auto* info = std::get_if<proto::InfoFrame>(&f)) {
      std::cout << "firmware: " << info->firmware.value() << "\n";
      for (const auto& [k, iv] : info->sensor_intervals)
        std::cout << "  " << proto::app_name(k) << " every " << iv << " s\n";
      std::cout << "listen_interval_min: " << info->listen_interval_min << "\n";
    } else if (const auto* data = std::get_if<proto::SensorDataFrame>(&f)) {
      for (const auto& [k, v] : data->readings)
        std::cout << "  " << proto::app_name(k) << " = " << v << "\n";
      std::cout << "battery_pct: " << data->battery_pct << "\n";
    }
    std::cout << "wire: " << proto::encode_frame(f) << "\n";
    return kExitOk;
  }
  if (mode == "encode") {
    // key=value pairs (temp=5 hum=10 ldr=15) become a schedule-update frame.
    std::vector<proto::AppConfig> cfgs;
    for (const std::string& a : args) {
      auto eq = a.find('=');
      if (eq == std::string::npos) throw Error("codec encode wants app=interval pairs");
      cfgs.push_back({parse_app_arg(a.substr(0, eq)),
                      static_cast<uint32_t>(std::stoul(a.substr(eq + 1)))});
    }
    proto::Schedule s = proto::build_schedule(cfgs);
    std::cout << proto::encode_frame(proto::ScheduleUpdateFrame{s}) << "\n";
    return kExitOk;
  }
  throw Error("codec mode must be encode or decode");
}

int cmd_plan(int running, const std::string& stored, const std::string& admitted,
             const std::string& app, std::optional<uint32_t> interval, int battery) {
  ctrl::NodeView view;
  view.node_id = 1;
  view.battery_pct = battery;
  if (running > 0) view.running = proto::FirmwareId(running);
  {
    std::istringstream in(stored);
    std::string tok;
    while (std::getline(in, tok, ','))
      if (!tok.empty()) view.sd_firmwares.insert(std::stoi(tok));
  }
  {
    std::istringstream in(admitted);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      auto colon = tok.find(':');
      proto::AppKind kind = parse_app_arg(tok.substr(0, colon));
      std::optional<uint32_t> iv;
      if (colon != std::string::npos)
        iv = static_cast<uint32_t>(std::stoul(tok.substr(colon + 1)));
      view.admitted.push_back({kind, iv});
    }
  }
  ctrl::AppRequest req{parse_app_arg(app), interval, 0, std::nullopt};
  ctrl::DeploymentPlan plan = ctrl::plan_deployment(view, req);
  std::cout << "case=" << static_cast<int>(plan.plan_case) << " ("
            << ctrl::plan_case_name(plan.plan_case) << ")\n";
  if (plan.target_firmware) std::cout << "target_firmware=" << plan.target_firmware->value() << "\n";
  for (const proto::Frame& f : plan.frames)
    std::cout << "frame: " << proto::encode_frame(f) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shared sensor network simulator"};
  app.require_subcommand(1);

  std::string scenario_path, data_dir, profile;
  double duration_s = 600.0;
  uint64_t seed = 0;

  CLI::App* run = app.add_subcommand("run", "run a scenario");
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--data-dir", data_dir, "store directory")->required();
  run->add_option("--duration", duration_s, "simulated seconds")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "seed for generated presence events");
  run->add_option("--profile", profile, "current-draw profile file");

  CLI::App* report = app.add_subcommand("report", "print a table");
  std::string report_kind;
  report->add_option("kind", report_kind, "update-times | lifetimes | monitor")->required();
  report->add_option("--data-dir", data_dir, "store directory (monitor)");
  report->add_option("--profile", profile, "current-draw profile file");

  CLI::App* codec = app.add_subcommand("codec", "encode or decode one frame");
  std::string codec_mode;
  std::vector<std::string> codec_args;
  codec->add_option("mode", codec_mode, "encode | decode")->required();
  codec->add_option("args", codec_args, "frame string or app=interval pairs");

  CLI::App* plan = app.add_subcommand("plan", "case analysis for one hypothetical node");
  int plan_running = 0, plan_battery = 100;
  std::string plan_stored, plan_admitted, plan_app;
  std::optional<uint32_t> plan_interval;
  plan->add_option("--running", plan_running, "running firmware id (0 = none)");
  plan->add_option("--stored", plan_stored, "comma-separated SD firmware ids");
  plan->add_option("--admitted", plan_admitted, "comma-separated app:interval pairs");
  plan->add_option("--app", plan_app, "requested application")->required();
  plan->add_option("--interval", plan_interval, "requested sensing interval (s)");
  plan->add_option("--battery", plan_battery, "battery percentage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(scenario_path, data_dir, duration_s, seed, profile);
    if (*report) {
      if (report_kind == "update-times") return cmd_report_update_times();
      if (report_kind == "lifetimes") return cmd_report_lifetimes(profile);
      if (report_kind == "monitor") return cmd_report_monitor(data_dir);
      throw Error("unknown report kind '" + report_kind + "'");
    }
    if (*codec) return cmd_codec(codec_mode, codec_args);
    if (*plan)
      return cmd_plan(plan_running, plan_stored, plan_admitted, plan_app, plan_interval,
                      plan_battery);
  } catch (const MalformedFrame& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ScenarioParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MissingData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
