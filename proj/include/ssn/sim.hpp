#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssn/controller.hpp"
#include "ssn/energy.hpp"
#include "ssn/netsim.hpp"
#include "ssn/node.hpp"
#include "ssn/scenario.hpp"
#include "ssn/store.hpp"

// Glue layer: runs one scenario end to end. The engine drives node alarms,
// frame deliveries and controller reactions; everything observable lands in
// the event log and the store.
namespace ssn::sim {

struct SimOptions {
  int64_t duration_ms = 3'600'000;
  uint64_t seed = 0;
};

class Simulation {
 public:
  Simulation(const scn::Scenario& sc, store::Store* db, const energy::CurrentDraws* draws,
             net::EventLog* log, SimOptions opt);

  void run();

  node::Node& node_at(int id) { return nodes_.at(id); }
  const node::Node& node_at(int id) const { return nodes_.at(id); }
  bool has_node(int id) const { return nodes_.count(id) > 0; }
  ctrl::Controller& controller() { return ctrl_; }
  const net::Network& network() const { return net_; }
  const net::Topology& topology() const { return topo_; }
  int64_t now_ms() const { return engine_.now_ms(); }

  // Device rows vs live node state (running firmware and sensing intervals).
  // Nodes with plans still in flight are skipped. Empty means consistent.
  std::vector<std::string> store_mismatches() const;

 private:
  void dispatch(const net::SimEvent& ev);
  void process_actions(int64_t now_ms, int node_id, node::Actions&& acts);
  void process_commands(int64_t now_ms, ctrl::Controller::Commands&& cmds);
  void deliver_later(const net::PendingDelivery& pd);

  net::Topology topo_;
  net::LinkModel lm_;
  net::EventLog* log_;
  store::Store* db_;
  const energy::CurrentDraws* draws_;
  net::Network net_;
  net::Engine engine_;
  ctrl::Controller ctrl_;
  std::map<int, node::Node> nodes_;
  int coord_ = -1;
  SimOptions opt_;
};

// Every injected frame must end exactly one way: received, dropped, still
// parked at a parent, or in flight at the horizon. Throws Error on violation.
void check_frame_conservation(const std::vector<std::string>& lines);

// End devices only ever talk through their parent and never relay for others.
// Throws Error on violation.
void check_ed_isolation(const std::vector<std::string>& lines, const net::Topology& topo);

}  // namespace ssn::sim
