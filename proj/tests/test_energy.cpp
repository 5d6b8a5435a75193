#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "ssn/energy.hpp"

using namespace ssn;
using namespace ssn::energy;
using proto::AppKind;

namespace {

NodeEnergyConfig reference_config(Role role) {
  // one temperature instance sampling every 10 s, listening once a minute
  NodeEnergyConfig cfg;
  cfg.role = role;
  cfg.apps = {{AppKind::Temperature, 10u}};
  cfg.listen_interval_min = 1;
  return cfg;
}

}  // namespace

TEST_CASE("duty cycle of the reference configuration") {
  DutyCycle dc = duty_cycle_of(reference_config(Role::EndDevice));
  CHECK(dc.t_sense == doctest::Approx(0.002).epsilon(1e-9));
  CHECK(dc.t_send == doctest::Approx(102.0 * 8 / 250000.0 / 10.0).epsilon(1e-9));
  CHECK(dc.t_recv == doctest::Approx(49.0 * 8 / 250000.0 / 10.0).epsilon(1e-9));
  CHECK(dc.t_listen_window == doctest::Approx(1.0 / 60.0).epsilon(1e-9));
  CHECK(dc.t_listen_send == doctest::Approx(87.0 * 8 / 250000.0 / 60.0).epsilon(1e-9));
  CHECK(dc.t_listen_ack == doctest::Approx(49.0 * 8 / 250000.0 / 60.0).epsilon(1e-9));
  double active = dc.active_total();
  CHECK(dc.t_sleep == doctest::Approx(1.0 - active).epsilon(1e-12));
  CHECK(dc.t_sleep == doctest::Approx(0.9807776).epsilon(1e-6));
}

TEST_CASE("duty fractions sum to one") {
  NodeEnergyConfig cfg;
  cfg.apps = {{AppKind::Temperature, 5u}, {AppKind::Humidity, 30u}, {AppKind::Presence, {}}};
  cfg.listen_interval_min = 3;
  DutyCycle dc = duty_cycle_of(cfg);
  CHECK(dc.t_sleep + dc.active_total() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lifetime anchors") {
  CurrentDraws draws;
  SUBCASE("router keeps the radio awake and lasts days") {
    double rate = energy_rate(reference_config(Role::Router), draws);
    CHECK(rate == doctest::Approx(46.15098).epsilon(1e-4));
    CHECK(lifetime_days(reference_config(Role::Router), draws) ==
          doctest::Approx(5.96).epsilon(0.005));
  }
  SUBCASE("end device sleeps the radio and lasts months") {
    double rate = energy_rate(reference_config(Role::EndDevice), draws);
    CHECK(rate == doctest::Approx(2.16310).epsilon(1e-4));
    CHECK(lifetime_days(reference_config(Role::EndDevice), draws) ==
          doctest::Approx(127.13).epsilon(0.005));
  }
}

TEST_CASE("faster sensing drains faster") {
  CurrentDraws draws;
  NodeEnergyConfig slow = reference_config(Role::EndDevice);
  NodeEnergyConfig fast = slow;
  fast.apps = {{AppKind::Temperature, 2u}};
  CHECK(energy_rate(fast, draws) > energy_rate(slow, draws));
  CHECK(lifetime_days(fast, draws) < lifetime_days(slow, draws));
}

TEST_CASE("extra applications drain faster") {
  CurrentDraws draws;
  NodeEnergyConfig one = reference_config(Role::EndDevice);
  NodeEnergyConfig two = one;
  two.apps.push_back({AppKind::Humidity, 10u});
  CHECK(energy_rate(two, draws) > energy_rate(one, draws));
}

TEST_CASE("application energy ranking") {
  CurrentDraws draws;
  std::vector<AppConfig> apps = {{AppKind::Temperature, 10u}, {AppKind::Humidity, 10u}};
  std::vector<AppKind> rank = app_energy_rank(apps, draws);
  REQUIRE(rank.size() == 2);
  // the humidity sensor draws far more board current at equal intervals
  CHECK(rank[0] == AppKind::Humidity);
  CHECK(rank[1] == AppKind::Temperature);
  CHECK(app_contribution({AppKind::Humidity, 10u}, draws) >
        app_contribution({AppKind::Temperature, 10u}, draws));
}

TEST_CASE("presence ranks by its constant connector draw") {
  CurrentDraws draws;
  std::vector<AppConfig> apps = {{AppKind::Presence, {}}, {AppKind::Temperature, 10u}};
  std::vector<AppKind> rank = app_energy_rank(apps, draws);
  REQUIRE(rank.size() == 2);
  CHECK(rank[0] == AppKind::Presence);  // 0.100 mA continuous beats periodic temp
}

TEST_CASE("drain and battery percentage") {
  CurrentDraws draws;
  NodeEnergyConfig cfg = reference_config(Role::Router);
  double rate = energy_rate(cfg, draws);
  double left = drain(6600.0, cfg, draws, 3600.0);
  CHECK(left == doctest::Approx(6600.0 - rate).epsilon(1e-9));
  CHECK(drain(0.5, cfg, draws, 3600.0 * 1000) == 0.0);  // floored at empty

  CHECK(battery_pct(6600.0, 6600.0) == 100);
  CHECK(battery_pct(3300.0, 6600.0) == 50);
  CHECK(battery_pct(0.0, 6600.0) == 0);
  CHECK(battery_pct(-5.0, 6600.0) == 0);
  CHECK(battery_pct(9000.0, 6600.0) == 100);
}

TEST_CASE("pir event charge is positive and small") {
  CurrentDraws draws;
  double q = pir_event_charge_mAh(draws);
  CHECK(q > 0.0);
  CHECK(q < 0.01);
}

TEST_CASE("degenerate configurations are rejected") {
  NodeEnergyConfig cfg;
  cfg.apps = {};
  cfg.listen_interval_min = 0;
  CHECK_THROWS_AS(duty_cycle_of(cfg), DegenerateConfig);

  CurrentDraws zero;
  zero.mote_on = zero.mote_sleep = zero.xbee_on = zero.xbee_sleep = 0;
  zero.xbee_send = zero.xbee_recv = zero.board_min = zero.board_read_register = 0;
  zero.sd_on = zero.sd_read = zero.sd_write = zero.sd_off = 0;
  for (auto& [k, v] : zero.board_per_sensor) v = 0;
  CHECK_THROWS_AS(lifetime_days(reference_config(Role::EndDevice), zero), InfiniteLifetime);
}

TEST_CASE("current draw validation") {
  CurrentDraws bad;
  bad.xbee_send = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("profile loading") {
  CurrentDraws fromfile = load_profile(std::string(SSN_PROFILE_DIR) + "/default.profile");
  CurrentDraws defaults;
  CHECK(fromfile.xbee_on == defaults.xbee_on);
  CHECK(fromfile.mote_sleep == defaults.mote_sleep);
  CHECK(fromfile.board_per_sensor.at(AppKind::Humidity) ==
        defaults.board_per_sensor.at(AppKind::Humidity));

  std::string tmp = "energy_profile_tmp.profile";
  {
    std::ofstream out(tmp);
    out << "# comment line\n";
    out << "xbee_send 99.5\n";
  }
  CurrentDraws partial = load_profile(tmp);
  CHECK(partial.xbee_send == 99.5);
  CHECK(partial.xbee_recv == defaults.xbee_recv);  // untouched keys keep defaults
  {
    std::ofstream out(tmp);
    out << "warp_core 3.14\n";
  }
  CHECK_THROWS_AS(load_profile(tmp), Error);
  CHECK_THROWS_AS(load_profile("does_not_exist.profile"), Error);
  std::remove(tmp.c_str());
}

TEST_CASE("explicit duty fractions feed the same dot product") {
  CurrentDraws draws;
  NodeEnergyConfig cfg = reference_config(Role::EndDevice);
  DutyCycle dc = duty_cycle_of(cfg);
  CHECK(energy_rate_explicit(dc, cfg, draws) ==
        doctest::Approx(energy_rate(cfg, draws)).epsilon(1e-12));
  DutyCycle more = dc;
  more.t_send *= 2;
  more.t_sleep -= dc.t_send;
  CHECK(energy_rate_explicit(more, cfg, draws) > energy_rate(cfg, draws));
}
