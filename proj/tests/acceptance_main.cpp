// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssn/controller.hpp"
#include "ssn/energy.hpp"
#include "ssn/netsim.hpp"
#include "ssn/proto.hpp"
#include "ssn/sim.hpp"
#include "ssn/store.hpp"

using namespace ssn;
using proto::AppKind;
using proto::FirmwareId;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool close_rel(double actual, double expected, double rel) {
  return std::fabs(actual - expected) <= rel * std::fabs(expected);
}

bool close_abs(double actual, double expected, double abs) {
  return std::fabs(actual - expected) <= abs;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("ssn_accept_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// ---- 1: application subset <-> firmware id codification -------------------

bool check_codification(std::string& why) {
  auto t0 = Clock::now();
  int covered = 0;
  std::set<int> ids;
  for (int mask = 1; mask <= 15; ++mask) {
    std::set<AppKind> apps;
    for (AppKind k : proto::kAllApps)
      if (mask & proto::app_bit(k)) apps.insert(k);
    int expected = (apps.count(AppKind::Presence) ? 8 : 0) +
                   (apps.count(AppKind::Luminosity) ? 4 : 0) +
                   (apps.count(AppKind::Humidity) ? 2 : 0) +
                   (apps.count(AppKind::Temperature) ? 1 : 0);
    FirmwareId fw = proto::firmware_of(apps);
    if (fw.value() != expected) {
      why = "subset mask " + std::to_string(mask) + " mapped to " + std::to_string(fw.value());
      return false;
    }
    if (proto::apps_of(fw) != apps) {
      why = "inverse mapping broken for id " + std::to_string(fw.value());
      return false;
    }
    ids.insert(fw.value());
    ++covered;
  }
  if (covered != 15 || ids.size() != 15) {
    why = "expected 15 distinct ids, saw " + std::to_string(ids.size());
    return false;
  }
  if (seconds_since(t0) >= 1.0) {
    why = "took " + fmt(seconds_since(t0)) + " s (budget 1 s)";
    return false;
  }
  return true;
}

// ---- 2: merged schedule codec vs divisibility oracle ----------------------

bool check_schedule_codec(std::string& why) {
  auto t0 = Clock::now();
  proto::Schedule ref = proto::build_schedule(
      {{AppKind::Temperature, 5u}, {AppKind::Humidity, 10u}, {AppKind::Luminosity, 15u}});
  if (ref.intervals() != std::vector<uint32_t>{5, 5, 5, 5, 5, 5}) {
    why = "5/10/15 merge produced wrong intervals";
    return false;
  }
  std::vector<int> idx;
  for (FirmwareId m : ref.indices()) idx.push_back(m.value());
  if (idx != std::vector<int>{7, 1, 3, 5, 3, 1, 7}) {
    why = "5/10/15 merge produced wrong indices";
    return false;
  }
  std::string wire = proto::encode_frame(proto::ScheduleUpdateFrame{ref});
  if (wire != "2|<5><5><5><5><5><5>|-|<7><1><3><5><3><1><7>|") {
    why = "5/10/15 wire form was " + wire;
    return false;
  }

  std::mt19937 rng(12345);
  std::uniform_int_distribution<int> napps(1, 4);
  std::uniform_int_distribution<uint32_t> iv(1, 60);
  std::uniform_int_distribution<int> pick(0, 2);
  const std::array<AppKind, 3> periodic = {AppKind::Temperature, AppKind::Humidity,
                                           AppKind::Luminosity};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<proto::AppConfig> cfg;
    uint64_t lcm = 1;
    do {
      cfg.clear();
      lcm = 1;
      int n = napps(rng);
      for (int i = 0; i < n; ++i) {
        uint32_t interval = iv(rng);
        cfg.push_back({periodic[pick(rng)], interval});
        lcm = std::lcm(lcm, static_cast<uint64_t>(interval));
      }
    } while (lcm > 6000);  // keep the oracle walk short

    proto::Schedule s = proto::build_schedule(cfg);
    if (s.hyperperiod_s() != lcm) {
      why = "trial " + std::to_string(trial) + ": hyperperiod " +
            std::to_string(s.hyperperiod_s()) + " != lcm " + std::to_string(lcm);
      return false;
    }
    proto::Frame round = proto::decode_frame(proto::encode_frame(proto::ScheduleUpdateFrame{s}));
    if (!(std::get<proto::ScheduleUpdateFrame>(round).schedule == s)) {
      why = "trial " + std::to_string(trial) + ": codec round trip changed the schedule";
      return false;
    }

    std::map<uint64_t, uint8_t> by_offset;
    for (std::size_t k = 0; k < s.event_count(); ++k)
      by_offset[s.offset_of(k)] = s.indices()[k].mask();
    for (uint64_t t = 0; t < 3 * s.hyperperiod_s(); ++t) {
      uint8_t expected = 0;
      for (const proto::AppConfig& c : cfg)
        if (t % *c.sensing_interval_s == 0) expected |= proto::app_bit(c.kind);
      auto it = by_offset.find(t % s.hyperperiod_s());
      uint8_t got = it == by_offset.end() ? 0 : it->second;
      if (got != expected) {
        why = "trial " + std::to_string(trial) + ": mask mismatch at t=" + std::to_string(t);
        return false;
      }
    }
  }
  if (seconds_since(t0) >= 10.0) {
    why = "took " + fmt(seconds_since(t0)) + " s (budget 10 s)";
    return false;
  }
  return true;
}

// ---- 3: lifetime anchors --------------------------------------------------

energy::NodeEnergyConfig reference_config(energy::Role role) {
  energy::NodeEnergyConfig cfg;
  cfg.role = role;
  cfg.apps = {{AppKind::Temperature, 10u}};
  cfg.listen_interval_min = 1;
  return cfg;
}

bool check_lifetime_anchors(std::string& why) {
  auto t0 = Clock::now();
  energy::CurrentDraws draws;
  double router = energy::lifetime_days(reference_config(energy::Role::Router), draws);
  double ed = energy::lifetime_days(reference_config(energy::Role::EndDevice), draws);
  if (!close_rel(router, 5.96, 0.02)) {
    why = "router lifetime " + fmt(router) + " d outside 5.96 d +/-2%";
    return false;
  }
  if (!close_rel(ed, 129.58, 0.02)) {
    why = "end-device lifetime " + fmt(ed) + " d outside 129.58 d +/-2%";
    return false;
  }
  if (seconds_since(t0) >= 1.0) {
    why = "took " + fmt(seconds_since(t0)) + " s (budget 1 s)";
    return false;
  }
  return true;
}

// ---- 4: duty-cycle split --------------------------------------------------

bool check_duty_fractions(std::string& why) {
  energy::DutyCycle dc = energy::duty_cycle_of(reference_config(energy::Role::Router));
  struct Quote {
    const char* name;
    double actual;
    double quoted;
    double tol;
  };
  const Quote quotes[] = {
      {"t_sleep", dc.t_sleep, 0.9807, 5e-4},
      {"t_sense", dc.t_sense, 0.002, 5e-6},
      {"t_send", dc.t_send, 0.00033, 5e-6},
      {"t_recv", dc.t_recv, 0.00016, 5e-6},
      {"t_listen", dc.t_listen_window, 0.01667, 5e-6},
  };
  for (const Quote& q : quotes) {
    if (!close_abs(q.actual, q.quoted, q.tol)) {
      why = std::string(q.name) + " = " + fmt(q.actual) + " vs quoted " + fmt(q.quoted);
      return false;
    }
  }
  double total = dc.t_sleep + dc.active_total();
  if (!close_abs(total, 1.0, 1e-9)) {
    why = "fractions sum to " + fmt(total);
    return false;
  }
  return true;
}

// ---- 5: image transfer timings -------------------------------------------

bool check_transfer_table(std::string& why) {
  net::LinkModel lm;
  struct Row {
    int fw;
    double duration_s;
    double rate_kbps;
  };
  const Row rows[] = {{1, 115, 5.53}, {3, 129, 5.31}, {7, 132, 5.20}, {15, 134, 5.17}};
  for (const Row& r : rows) {
    net::TransferDescriptor d = net::descriptor_for(FirmwareId(r.fw), lm);
    if (d.bytes_sent() != d.frames * 81) {
      why = "fw " + std::to_string(r.fw) + " bytes_sent != frames*81";
      return false;
    }
    net::TransferTiming t = net::ota_transfer(d, lm);
    if (!close_rel(t.duration_s, r.duration_s, 0.05)) {
      why = "fw " + std::to_string(r.fw) + " duration " + fmt(t.duration_s) +
            " s outside " + fmt(r.duration_s) + " s +/-5%";
      return false;
    }
    if (!close_rel(t.effective_rate_bps / 1000.0, r.rate_kbps, 0.05)) {
      why = "fw " + std::to_string(r.fw) + " rate " + fmt(t.effective_rate_bps / 1000.0) +
            " kbps outside " + fmt(r.rate_kbps) + " kbps +/-5%";
      return false;
    }
  }
  return true;
}

// ---- 6: deployment case coverage -----------------------------------------

bool check_case_coverage(std::string& why) {
  int combos = 0;
  for (int fw = 1; fw <= 15; ++fw) {
    FirmwareId running(fw);
    std::set<AppKind> run_kinds = proto::apps_of(running);
    for (AppKind kind : proto::kAllApps) {
      for (bool same_interval : {true, false}) {
        for (bool stored : {true, false}) {
          ctrl::NodeView v;
          v.node_id = 1;
          v.running = running;
          v.sd_firmwares = {fw};
          for (AppKind k : run_kinds)
            v.admitted.push_back(
                {k, proto::is_periodic(k) ? std::optional<uint32_t>(30u) : std::nullopt});

          ctrl::AppRequest req;
          req.kind = kind;
          if (proto::is_periodic(kind)) req.sensing_interval_s = same_interval ? 30u : 45u;

          std::set<AppKind> target_kinds = run_kinds;
          target_kinds.insert(kind);
          FirmwareId target = proto::firmware_of(target_kinds);
          if (stored) v.sd_firmwares.insert(target.value());

          ctrl::PlanCase expected;
          if (running.has(kind))
            expected = proto::is_periodic(kind) && !same_interval ? ctrl::PlanCase::Reconfigure
                                                                  : ctrl::PlanCase::NoOp;
          else
            expected = stored ? ctrl::PlanCase::StartStored : ctrl::PlanCase::SendAndStart;

          ctrl::DeploymentPlan p = ctrl::plan_deployment(v, req);
          ++combos;
          if (p.plan_case != expected) {
            why = "fw " + std::to_string(fw) + " + " + std::string(proto::app_name(kind)) +
                  (same_interval ? " same" : " new") + " interval" +
                  (stored ? " stored" : " absent") + ": case " +
                  std::string(ctrl::plan_case_name(p.plan_case)) + ", expected " +
                  std::string(ctrl::plan_case_name(expected));
            return false;
          }
          std::size_t want_frames = 0;
          if (expected == ctrl::PlanCase::Reconfigure || expected == ctrl::PlanCase::StartStored)
            want_frames = 1;
          if (expected == ctrl::PlanCase::SendAndStart) want_frames = 2;
          if (p.frames.size() != want_frames) {
            why = "fw " + std::to_string(fw) + ": " +
                  std::string(ctrl::plan_case_name(expected)) + " with " +
                  std::to_string(p.frames.size()) + " frames";
            return false;
          }
        }
      }
    }
  }
  if (combos != 240) {
    why = "covered " + std::to_string(combos) + " of 240 combinations";
    return false;
  }

  // named outcomes
  {
    ctrl::NodeView v;
    v.node_id = 1;
    v.running = FirmwareId(1);
    v.sd_firmwares = {1};
    v.admitted = {{AppKind::Temperature, 10u}};
    ctrl::DeploymentPlan p = ctrl::plan_deployment(v, {AppKind::Temperature, 10u, 0, {}});
    if (p.plan_case != ctrl::PlanCase::NoOp) {
      why = "identical configuration did not resolve to no-op";
      return false;
    }
  }
  {
    ctrl::NodeView v;
    v.node_id = 1;
    v.running = FirmwareId(4);
    v.sd_firmwares = {4, 6};
    v.admitted = {{AppKind::Luminosity, 15u}};
    ctrl::DeploymentPlan p = ctrl::plan_deployment(v, {AppKind::Humidity, 20u, 0, {}});
    if (p.plan_case != ctrl::PlanCase::StartStored || p.target_firmware != FirmwareId(6)) {
      why = "humidity onto a luminosity node with image 6 stored did not start image 6";
      return false;
    }
  }
  {
    ctrl::NodeView v;
    v.node_id = 1;
    v.running = FirmwareId(1);
    v.sd_firmwares = {1};
    v.admitted = {{AppKind::Temperature, 10u}};
    ctrl::DeploymentPlan p = ctrl::plan_deployment(v, {AppKind::Humidity, 20u, 0, {}});
    if (p.plan_case != ctrl::PlanCase::SendAndStart || p.target_firmware != FirmwareId(3)) {
      why = "absent combined image did not trigger transfer-then-start";
      return false;
    }
  }
  return true;
}

// ---- 7: low-battery reallocation -----------------------------------------

bool log_has(const std::vector<std::string>& lines, std::string_view kind,
             std::string_view fragment) {
  for (const std::string& line : lines) {
    if (line.find("\t" + std::string(kind)) == std::string::npos) continue;
    if (fragment.empty() || line.find(std::string(fragment)) != std::string::npos) return true;
  }
  return false;
}

bool check_reallocation(std::string& why) {
  TempDir dir("realloc");
  scn::Scenario sc = scn::load_scenario(std::string(SSN_SCENARIO_DIR) + "/realloc_demo.scn");
  store::Store db(dir.path.string());
  energy::CurrentDraws draws;
  net::EventLog log;
  log.set_seed(0);
  sim::Simulation s(sc, &db, &draws, &log, sim::SimOptions{3'600'000, 0});
  s.run();

  if (!log_has(log.lines(), "EVICT", "app=HUM fw_old=3 fw_new=1")) {
    why = "no humidity eviction from the firmware-3 node";
    return false;
  }
  if (!log_has(log.lines(), "XFER_START", "fw=1")) {
    why = "source node never received the temperature-only image";
    return false;
  }
  // redeployment goes to node 2, the only peer above the battery floor (and
  // therefore the highest-battery one)
  if (!log_has(log.lines(), "DECIDE", "node=2\tfw=2")) {
    why = "humidity was not redeployed to the peer node";
    return false;
  }
  if (!log_has(log.lines(), "XFER_START", "fw=2")) {
    why = "peer node never received the humidity image";
    return false;
  }
  std::vector<std::string> mismatches = s.store_mismatches();
  if (!mismatches.empty()) {
    why = "store/world mismatch: " + mismatches.front();
    return false;
  }
  return true;
}

// ---- 8: simulator invariants on every bundled scenario --------------------

std::vector<std::string> run_once(const std::filesystem::path& scn_path, uint64_t seed,
                                  const net::Topology** topo_out, std::string& err) {
  TempDir dir("invariants_" + scn_path.stem().string() + "_" + std::to_string(seed));
  scn::Scenario sc = scn::load_scenario(scn_path.string());
  net::EventLog log;
  log.set_seed(seed);
  if (sc.nodes.empty()) {
    *topo_out = nullptr;
    return log.lines();
  }
  store::Store db(dir.path.string());
  energy::CurrentDraws draws;
  sim::Simulation s(sc, &db, &draws, &log, sim::SimOptions{3'600'000, seed});
  s.run();
  sim::check_frame_conservation(log.lines());
  sim::check_ed_isolation(log.lines(), s.topology());
  std::vector<std::string> mismatches = s.store_mismatches();
  if (!mismatches.empty()) err = "store mismatch: " + mismatches.front();
  *topo_out = nullptr;
  return log.lines();
}

bool check_sim_invariants(std::string& why) {
  auto t0 = Clock::now();
  std::vector<std::filesystem::path> scenarios;
  for (const auto& entry : std::filesystem::directory_iterator(SSN_SCENARIO_DIR))
    if (entry.path().extension() == ".scn") scenarios.push_back(entry.path());
  std::sort(scenarios.begin(), scenarios.end());
  if (scenarios.empty()) {
    why = "no bundled scenarios found";
    return false;
  }
  for (const auto& path : scenarios) {
    const net::Topology* unused = nullptr;
    std::string err;
    std::vector<std::string> first = run_once(path, 1, &unused, err);
    if (!err.empty()) {
      why = path.filename().string() + ": " + err;
      return false;
    }
    std::vector<std::string> second = run_once(path, 1, &unused, err);
    if (first != second) {
      why = path.filename().string() + ": two runs with one seed diverged";
      return false;
    }
  }
  if (seconds_since(t0) >= 30.0) {
    why = "took " + fmt(seconds_since(t0)) + " s (budget 30 s)";
    return false;
  }
  return true;
}

// ---- 9: throughput shape --------------------------------------------------

bool check_throughput_shape(std::string& why) {
  net::LinkModel lm;
  const double rates[] = {9600, 19200, 38400, 57600, 115200, 230400};
  for (double coord_bps : rates) {
    for (double node_bps : rates) {
      net::Topology topo;
      topo.add_node(0, net::NodeRole::Coordinator);
      topo.add_node(1, net::NodeRole::Router);
      topo.add_node(2, net::NodeRole::Router);
      topo.add_link(0, 1);
      topo.add_link(1, 2);
      topo.set_serial_bps(0, coord_bps);
      topo.set_serial_bps(1, node_bps);
      topo.set_serial_bps(2, node_bps);
      double one_hop = net::max_throughput(topo, 0, 1, lm);
      double two_hop = net::max_throughput(topo, 0, 2, lm);
      if (two_hop > one_hop) {
        why = "serial " + fmt(coord_bps) + "/" + fmt(node_bps) + ": 2-hop " + fmt(two_hop) +
              " bps exceeds 1-hop " + fmt(one_hop) + " bps";
        return false;
      }
      if (one_hop > net::kThroughputCeilingBps || two_hop > net::kThroughputCeilingBps) {
        why = "serial " + fmt(coord_bps) + "/" + fmt(node_bps) + ": throughput above the " +
              fmt(net::kThroughputCeilingBps) + " bps ceiling";
        return false;
      }
      if (one_hop <= 0 || two_hop <= 0) {
        why = "non-positive throughput";
        return false;
      }
    }
  }
  return true;
}

// ---- 10: unreproducible measured figure documented ------------------------

bool check_readme_note(std::string& why) {
  std::ifstream in(SSN_README_PATH);
  if (!in) {
    why = "cannot open README at " SSN_README_PATH;
    return false;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.find("2.65") == std::string::npos) {
    why = "README does not mention the 2.65-day measured figure";
    return false;
  }
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower.find("out of scope") == std::string::npos) {
    why = "README does not mark the measured figure as out of scope";
    return false;
  }
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
  };
  const Criterion criteria[] = {
      {"application subset <-> firmware id codification is a bijection", check_codification},
      {"merged schedule codec matches the divisibility oracle", check_schedule_codec},
      {"router and end-device lifetime anchors within 2%", check_lifetime_anchors},
      {"duty-cycle fractions match the reference split", check_duty_fractions},
      {"image transfer durations, rates and byte counts", check_transfer_table},
      {"deployment case analysis covers all 240 combinations", check_case_coverage},
      {"low-battery reallocation evicts, reprograms and redeploys", check_reallocation},
      {"conservation, end-device isolation and determinism on bundled scenarios",
       check_sim_invariants},
      {"throughput never gains from extra hops and respects the ceiling",
       check_throughput_shape},
      {"README documents the unreproducible measured battery figure", check_readme_note},
  };

  int failures = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    std::string why;
    bool ok = false;
    try {
      ok = c.fn(why);
    } catch (const std::exception& e) {
      why = e.what();
    }
    if (ok) {
      std::printf("PASS %2d %s\n", index, c.name);
    } else {
      std::printf("FAIL %2d %s%s%s\n", index, c.name, why.empty() ? "" : " -- ",
                  why.c_str());
      ++failures;
    }
  }
  if (failures) std::printf("%d of %d criteria failed\n", failures, index);
  return failures == 0 ? 0 : 1;
}
