#pragma once

#include <map>
#include <string>
#include <vector>

#include "ssn/proto.hpp"

// Consumption model for the sensor nodes: per-module current draws, duty-cycle
// fractions of the sleep/sense/listen states and the resulting lifetime
// estimate (battery capacity divided by the mean current).
namespace ssn::energy {

using proto::AppConfig;
using proto::AppKind;

enum class Role { Router, EndDevice };

// Per-module currents in mA. Defaults are the measured hardware values; the
// luminosity connector is quoted as a 32-64 uA range and defaults to the
// midpoint.
struct CurrentDraws {
  double mote_on = 15.0;
  double mote_sleep = 0.055;

  double xbee_on = 45.56;
  double xbee_sleep = 0.71;
  double xbee_send = 105.0;
  double xbee_recv = 50.46;

  double board_min = 0.0036;
  std::map<AppKind, double> board_per_sensor = {
      {AppKind::Temperature, 0.038},  // connector 32 uA + sensor 6 uA
      {AppKind::Humidity, 0.212},     // connector 32 uA + sensor 180 uA
      {AppKind::Luminosity, 0.048},   // connector 32-64 uA midpoint, sensor 0
      {AppKind::Presence, 0.100},     // powered continuously while deployed
  };
  double board_read_register = 0.150;

  double sd_on = 0.14;
  double sd_read = 0.2;
  double sd_write = 0.2;
  double sd_off = 0.0;

  void validate() const;  // throws Error on negative or inverted values
};

// Fractions of wall time spent in each power state. The listen cycle splits
// into the #LISTEN transmission, the link ACK reception and the 1 s receive
// window.
struct DutyCycle {
  double t_sleep = 0;
  double t_sense = 0;
  double t_send = 0;
  double t_recv = 0;
  double t_listen_window = 0;
  double t_listen_send = 0;
  double t_listen_ack = 0;

  double active_total() const {
    return t_sense + t_send + t_recv + t_listen_window + t_listen_send + t_listen_ack;
  }
};

struct NodeEnergyConfig {
  Role role = Role::Router;
  std::vector<AppConfig> apps;
  uint32_t listen_interval_min = 1;  // 0 disables listening
  double battery_capacity_mAh = 6600.0;
};

inline constexpr double kRadioBps = 250000.0;
inline constexpr double kSensingSeconds = 0.020;  // register read upper bound
inline constexpr double kListenWindowSeconds = 1.0;

// Per-state time fractions for a node's application mix and listen interval.
// Throws DegenerateConfig when there is no activity at all.
DutyCycle duty_cycle_of(const NodeEnergyConfig& cfg);

// Mean current in mA: the dot product of state currents and duty fractions.
double energy_rate(const NodeEnergyConfig& cfg, const CurrentDraws& draws);

// Same dot product but over caller-supplied fractions; used by property tests
// that perturb individual fractions.
double energy_rate_explicit(const DutyCycle& dc, const NodeEnergyConfig& cfg,
                            const CurrentDraws& draws);

// Estimated lifetime in days. Throws InfiniteLifetime when the rate is zero.
double lifetime_days(const NodeEnergyConfig& cfg, const CurrentDraws& draws);

// Battery level after `elapsed_s` seconds of steady operation, floored at 0.
double drain(double battery_mAh, const NodeEnergyConfig& cfg, const CurrentDraws& draws,
             double elapsed_s);

// Charge in mAh consumed by one presence detection (sense, send, link ACK).
double pir_event_charge_mAh(const CurrentDraws& draws);

// Application kinds ordered by descending average current contribution.
// Presence ranks by its constant connector draw.
std::vector<AppKind> app_energy_rank(const std::vector<AppConfig>& apps,
                                     const CurrentDraws& draws);

// Mean current contribution of a single application instance in mA.
double app_contribution(const AppConfig& app, const CurrentDraws& draws);

// Key/value profile loader; unspecified keys keep their defaults.
CurrentDraws load_profile(const std::string& path);

int battery_pct(double battery_mAh, double capacity_mAh);

}  // namespace ssn::energy
