#include "ssn/energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssn/errors.hpp"

namespace ssn::energy {

namespace {

bool has_presence(const std::vector<AppConfig>& apps) {
  return std::any_of(apps.begin(), apps.end(),
                     [](const AppConfig& a) { return a.kind == AppKind::Presence; });
}

bool has_periodic(const std::vector<AppConfig>& apps) {
  return std::any_of(apps.begin(), apps.end(),
                     [](const AppConfig& a) { return proto::is_periodic(a.kind); });
}

double sensor_draw(const CurrentDraws& draws, AppKind k) {
  auto it = draws.board_per_sensor.find(k);
  return it == draws.board_per_sensor.end() ? 0.0 : it->second;
}

// Sensor board baseline: the minimum draw, plus the PIR connector which stays
// powered whenever a presence application is deployed.
double board_base(const NodeEnergyConfig& cfg, const CurrentDraws& draws) {
  double base = draws.board_min;
  if (has_presence(cfg.apps)) base += sensor_draw(draws, AppKind::Presence);
  return base;
}

struct SenseStats {
  double fraction = 0;   // total sensing time fraction
  double mean_draw = 0;  // reading-weighted mean sensor draw in mA
};

// Sensing statistics over one hyperperiod of the merged schedule. Overlapping
// progressions of the same kind count as a single register read.
SenseStats sense_stats(const NodeEnergyConfig& cfg, const CurrentDraws& draws) {
  SenseStats st;
  if (!has_periodic(cfg.apps)) return st;
  proto::Schedule sched = proto::build_schedule(cfg.apps);
  double hyper = static_cast<double>(sched.hyperperiod_s());
  double readings = 0;
  double draw_sum = 0;
  for (std::size_t e = 0; e < sched.event_count(); ++e) {
    for (AppKind k : proto::kAllApps) {
      if (!proto::is_periodic(k) || !sched.indices()[e].has(k)) continue;
      readings += 1;
      draw_sum += sensor_draw(draws, k);
    }
  }
  st.fraction = kSensingSeconds * readings / hyper;
  st.mean_draw = readings > 0 ? draw_sum / readings : 0.0;
  return st;
}

double tx_seconds(int phy_bytes) { return phy_bytes * 8.0 / kRadioBps; }

}  // namespace

void CurrentDraws::validate() const {
  auto nonneg = [](double v) { return v >= 0.0; };
  if (!nonneg(mote_on) || !nonneg(mote_sleep) || !nonneg(xbee_on) || !nonneg(xbee_sleep) ||
      !nonneg(xbee_send) || !nonneg(xbee_recv) || !nonneg(board_min) ||
      !nonneg(board_read_register) || !nonneg(sd_on) || !nonneg(sd_read) || !nonneg(sd_write) ||
      !nonneg(sd_off))
    throw Error("current draws must be non-negative");
  for (const auto& [k, v] : board_per_sensor)
    if (!nonneg(v)) throw Error("sensor draws must be non-negative");
  if (mote_sleep >= mote_on) throw Error("mote sleep draw must be below its on draw");
  if (xbee_sleep >= xbee_on) throw Error("xbee sleep draw must be below its on draw");
}

DutyCycle duty_cycle_of(const NodeEnergyConfig& cfg) {
  DutyCycle dc;
  if (has_periodic(cfg.apps)) {
    // Each reading is modelled as its own data frame plus link ACK.
    proto::Schedule sched = proto::build_schedule(cfg.apps);
    double hyper = static_cast<double>(sched.hyperperiod_s());
    double readings = 0;
    for (std::size_t e = 0; e < sched.event_count(); ++e)
      for (AppKind k : proto::kAllApps)
        if (proto::is_periodic(k) && sched.indices()[e].has(k)) readings += 1;
    dc.t_sense = kSensingSeconds * readings / hyper;
    dc.t_send = readings * tx_seconds(proto::kDataFramePhyBytes) / hyper;
    dc.t_recv = readings * tx_seconds(proto::kLinkAckPhyBytes) / hyper;
  }
  if (cfg.listen_interval_min >= 1) {
    double cycle = cfg.listen_interval_min * 60.0;
    dc.t_listen_window = kListenWindowSeconds / cycle;
    dc.t_listen_send = tx_seconds(proto::kListenPhyBytes) / cycle;
    dc.t_listen_ack = tx_seconds(proto::kLinkAckPhyBytes) / cycle;
  }
  if (dc.active_total() <= 0.0) throw DegenerateConfig();
  dc.t_sleep = 1.0 - dc.active_total();
  return dc;
}

double energy_rate_explicit(const DutyCycle& dc, const NodeEnergyConfig& cfg,
                            const CurrentDraws& draws) {
  double base = board_base(cfg, draws);
  double xbee_idle = cfg.role == Role::Router ? draws.xbee_on : draws.xbee_sleep;
  double sleep_cur = draws.mote_sleep + xbee_idle + base + draws.sd_on;

  SenseStats st = sense_stats(cfg, draws);
  double sense_cur =
      draws.mote_on + draws.xbee_on + base + draws.board_read_register + st.mean_draw + draws.sd_on;
  double send_cur = draws.mote_on + draws.xbee_send + base + draws.sd_on;
  double recv_cur = draws.mote_on + draws.xbee_recv + base + draws.sd_on;

  return sleep_cur * dc.t_sleep + sense_cur * dc.t_sense + send_cur * dc.t_send +
         recv_cur * dc.t_recv + recv_cur * dc.t_listen_window + send_cur * dc.t_listen_send +
         recv_cur * dc.t_listen_ack;
}

double energy_rate(const NodeEnergyConfig& cfg, const CurrentDraws& draws) {
  return energy_rate_explicit(duty_cycle_of(cfg), cfg, draws);
}

double lifetime_days(const NodeEnergyConfig& cfg, const CurrentDraws& draws) {
  double ec = energy_rate(cfg, draws);
  if (ec <= 0.0) throw InfiniteLifetime();
  return cfg.battery_capacity_mAh / ec / 24.0;
}

double drain(double battery_mAh, const NodeEnergyConfig& cfg, const CurrentDraws& draws,
             double elapsed_s) {
  if (elapsed_s < 0) throw Error("drain: negative elapsed time");
  if (elapsed_s == 0) return battery_mAh;
  double ec = energy_rate(cfg, draws);
  return std::max(0.0, battery_mAh - ec * elapsed_s / 3600.0);
}

double pir_event_charge_mAh(const CurrentDraws& draws) {
  double base = draws.board_min + sensor_draw(draws, AppKind::Presence);
  double sense_cur =
      draws.mote_on + draws.xbee_on + base + draws.board_read_register + draws.sd_on;
  double send_cur = draws.mote_on + draws.xbee_send + base + draws.sd_on;
  double recv_cur = draws.mote_on + draws.xbee_recv + base + draws.sd_on;
  double charge = sense_cur * kSensingSeconds + send_cur * tx_seconds(proto::kDataFramePhyBytes) +
                  recv_cur * tx_seconds(proto::kLinkAckPhyBytes);
  return charge / 3600.0;
}

double app_contribution(const AppConfig& app, const CurrentDraws& draws) {
  if (app.kind == AppKind::Presence) return sensor_draw(draws, AppKind::Presence);
  if (!app.sensing_interval_s || *app.sensing_interval_s < 1)
    throw Error("periodic application requires a sensing interval");
  double interval = static_cast<double>(*app.sensing_interval_s);
  double sense = kSensingSeconds / interval *
                 (sensor_draw(draws, app.kind) + draws.board_read_register);
  double send = tx_seconds(proto::kDataFramePhyBytes) / interval * draws.xbee_send;
  return sense + send;
}

std::vector<AppKind> app_energy_rank(const std::vector<AppConfig>& apps,
                                     const CurrentDraws& draws) {
  if (apps.empty()) throw Error("app_energy_rank: empty application set");
  std::map<AppKind, double> contribution;
  for (const AppConfig& a : apps) contribution[a.kind] += app_contribution(a, draws);
  std::vector<AppKind> order;
  for (const auto& [k, v] : contribution) order.push_back(k);
  std::stable_sort(order.begin(), order.end(), [&](AppKind a, AppKind b) {
    if (contribution[a] != contribution[b]) return contribution[a] > contribution[b];
    return proto::app_bit(a) < proto::app_bit(b);
  });
  return order;
}

CurrentDraws load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingData("energy profile " + path);
  CurrentDraws draws;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    std::istringstream ls{std::string(sv)};
    std::string key;
    if (!(ls >> key)) continue;
    double value = 0;
    if (!(ls >> value))
      throw Error("profile " + path + " line " + std::to_string(lineno) + ": expected a value");
    if (key == "mote_on") draws.mote_on = value;
    else if (key == "mote_sleep") draws.mote_sleep = value;
    else if (key == "xbee_on") draws.xbee_on = value;
    else if (key == "xbee_sleep") draws.xbee_sleep = value;
    else if (key == "xbee_send") draws.xbee_send = value;
    else if (key == "xbee_recv") draws.xbee_recv = value;
    else if (key == "board_min") draws.board_min = value;
    else if (key == "board_temperature") draws.board_per_sensor[AppKind::Temperature] = value;
    else if (key == "board_humidity") draws.board_per_sensor[AppKind::Humidity] = value;
    else if (key == "board_luminosity") draws.board_per_sensor[AppKind::Luminosity] = value;
    else if (key == "board_presence") draws.board_per_sensor[AppKind::Presence] = value;
    else if (key == "board_read_register") draws.board_read_register = value;
    else if (key == "sd_on") draws.sd_on = value;
    else if (key == "sd_read") draws.sd_read = value;
    else if (key == "sd_write") draws.sd_write = value;
    else if (key == "sd_off") draws.sd_off = value;
    else
      throw Error("profile " + path + " line " + std::to_string(lineno) + ": unknown key \"" +
                  key + "\"");
  }
  draws.validate();
  return draws;
}

int battery_pct(double battery_mAh, double capacity_mAh) {
  if (capacity_mAh <= 0) throw Error("battery capacity must be positive");
  double pct = 100.0 * battery_mAh / capacity_mAh;
  return std::clamp(static_cast<int>(std::lround(pct)), 0, 100);
}

}  // namespace ssn::energy
