#include "ssn/sim.hpp"

#include <charconv>
#include <random>
#include <sstream>

#include "ssn/errors.hpp"

namespace ssn::sim {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::optional<std::string> detail_token(const std::string& detail, std::string_view key) {
  std::istringstream in(detail);
  std::string tok;
  while (in >> tok)
    if (tok.rfind(key, 0) == 0) return tok.substr(key.size());
  return std::nullopt;
}

uint64_t parse_u64(const std::string& s, const std::string& line) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error("unparseable id in log line: " + line);
  return v;
}

std::vector<int> parse_route(const std::string& route) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= route.size()) {
    std::size_t gt = route.find('>', start);
    std::string part =
        gt == std::string::npos ? route.substr(start) : route.substr(start, gt - start);
    if (!part.empty()) out.push_back(std::stoi(part));
    if (gt == std::string::npos) break;
    start = gt + 1;
  }
  return out;
}

}  // namespace

Simulation::Simulation(const scn::Scenario& sc, store::Store* db,
                       const energy::CurrentDraws* draws, net::EventLog* log, SimOptions opt)
    : topo_(sc.topology()),
      lm_{},
      log_(log),
      db_(db),
      draws_(draws),
      net_(topo_, lm_, log),
      ctrl_(db, log, &topo_, draws, lm_),
      opt_(opt) {
  coord_ = topo_.coordinator_id();
  log_->set_seed(opt_.seed);

  for (const scn::ScenarioNode& n : sc.nodes) {
    if (n.id == coord_) continue;
    auto [it, inserted] = nodes_.try_emplace(n.id, n.id, n.role, draws_);
    (void)inserted;
    std::optional<node::SdImage> img;
    if (n.firmware)
      img = node::SdImage{*n.firmware, net::descriptor_for(*n.firmware, lm_).size_bytes};
    ctrl_.bootstrap_allocation(n.id, n.configs(), n.firmware, n.listen_min);
    process_actions(0, n.id, it->second.provision(0, img, n.intervals, n.listen_min));
  }

  for (const scn::Directive& d : sc.directives) {
    net::SimEvent ev;
    switch (d.kind) {
      case scn::Directive::Kind::Arrive:
        ev.kind = net::EventKind::AppArrival;
        ev.app = d.app;
        ev.interval_s = d.interval_s;
        ev.activity_s = d.activity_s;
        break;
      case scn::Directive::Kind::Depart:
        ev.kind = net::EventKind::AppDeparture;
        ev.app = d.app;
        break;
      case scn::Directive::Kind::Pir:
        ev.kind = net::EventKind::PirDetect;
        ev.node = d.node_id;
        break;
      case scn::Directive::Kind::Battery:
        ev.kind = net::EventKind::BatteryOverride;
        ev.node = d.node_id;
        ev.value = d.battery_pct;
        break;
    }
    engine_.schedule(d.time_ms, ev);
  }

  std::mt19937_64 rng(opt_.seed);
  for (const scn::PirGen& g : sc.pirgens) {
    std::uniform_int_distribution<int64_t> dist(g.start_ms, g.end_ms - 1);
    for (int i = 0; i < g.count; ++i) {
      net::SimEvent ev;
      ev.kind = net::EventKind::PirDetect;
      ev.node = g.node_id;
      engine_.schedule(dist(rng), ev);
    }
  }
}

void Simulation::run() {
  engine_.run_until(opt_.duration_ms, [this](const net::SimEvent& ev) { dispatch(ev); });
  for (const net::SimEvent& ev : engine_.pending()) {
    if (ev.kind != net::EventKind::FrameArrival) continue;
    log_->append(engine_.now_ms(), "INFLIGHT", ev.src, ev.dst,
                 "id=" + std::to_string(ev.frame_id) +
                     " tag=" + std::string(proto::frame_tag(*ev.frame)));
  }
}

void Simulation::dispatch(const net::SimEvent& ev) {
  int64_t now = engine_.now_ms();
  switch (ev.kind) {
    case net::EventKind::Alarm1:
      process_actions(now, ev.node, nodes_.at(ev.node).on_alarm1(now, ev.gen));
      break;
    case net::EventKind::Alarm2: {
      node::Node& n = nodes_.at(ev.node);
      process_actions(now, ev.node, n.on_alarm2(now, ev.gen));
      if (n.is_listening() && n.role() == net::NodeRole::EndDevice)
        for (const net::PendingDelivery& pd : net_.wake(now, ev.node)) deliver_later(pd);
      break;
    }
    case net::EventKind::WindowClose:
      process_actions(now, ev.node, nodes_.at(ev.node).on_window_close(now));
      break;
    case net::EventKind::PirDetect:
      if (!nodes_.count(ev.node)) {
        log_->append(now, "NOTE", ev.node, -1, "pir on unknown node ignored");
        break;
      }
      process_actions(now, ev.node, nodes_.at(ev.node).on_pir(now));
      break;
    case net::EventKind::RebootDone:
      process_actions(now, ev.node, nodes_.at(ev.node).on_reboot_done(now));
      break;
    case net::EventKind::TransferComplete:
      if (!nodes_.count(ev.node)) break;
      process_actions(now, ev.node, nodes_.at(ev.node).on_transfer_complete(now));
      break;
    case net::EventKind::FrameArrival: {
      net_.mark_delivered(ev.frame_id);
      log_->append(now, "RECV", ev.src, ev.dst,
                   "id=" + std::to_string(ev.frame_id) +
                       " tag=" + std::string(proto::frame_tag(*ev.frame)));
      if (ev.dst == coord_)
        process_commands(now, ctrl_.on_frame(now, ev.src, *ev.frame));
      else if (nodes_.count(ev.dst))
        process_actions(now, ev.dst, nodes_.at(ev.dst).on_frame(now, *ev.frame));
      break;
    }
    case net::EventKind::AppArrival: {
      std::string detail = "app=" + std::string(proto::app_tag(*ev.app));
      if (ev.interval_s) detail += " interval=" + std::to_string(*ev.interval_s);
      if (ev.activity_s) detail += " activity=" + std::to_string(*ev.activity_s);
      log_->append(now, "APP_ARRIVE", -1, -1, detail);
      if (ev.activity_s) {
        net::SimEvent dep;
        dep.kind = net::EventKind::AppDeparture;
        dep.app = ev.app;
        engine_.schedule(now + 1000LL * *ev.activity_s, dep);
      }
      ctrl::AppRequest req{*ev.app, ev.interval_s, now, ev.activity_s};
      process_commands(now, ctrl_.on_app_arrival(now, req));
      break;
    }
    case net::EventKind::AppDeparture:
      log_->append(now, "APP_DEPART", -1, -1,
                   "app=" + std::string(proto::app_tag(*ev.app)));
      process_commands(now, ctrl_.on_app_departure(now, *ev.app));
      break;
    case net::EventKind::BatteryOverride: {
      if (!nodes_.count(ev.node)) {
        log_->append(now, "NOTE", ev.node, -1, "battery override on unknown node ignored");
        break;
      }
      node::Node& n = nodes_.at(ev.node);
      n.drain_to(now);  // settle consumption at the old level first
      n.set_battery_pct(ev.value);
      log_->append(now, "BATTERY_SET", ev.node, -1, "pct=" + std::to_string(ev.value));
      break;
    }
  }
}

void Simulation::process_actions(int64_t now_ms, int node_id, node::Actions&& acts) {
  node::Node& n = nodes_.at(node_id);
  for (const std::string& note : acts.notes) log_->append(now_ms, "NOTE", node_id, -1, note);
  for (proto::Frame& f : acts.frames) {
    auto pd = net_.send(now_ms, f, node_id, coord_, true);
    if (pd) deliver_later(*pd);
  }
  if (acts.alarm1_at) {
    net::SimEvent e;
    e.kind = net::EventKind::Alarm1;
    e.node = node_id;
    e.gen = n.alarm1_gen();
    engine_.schedule(*acts.alarm1_at, e);
  }
  if (acts.alarm2_at) {
    net::SimEvent e;
    e.kind = net::EventKind::Alarm2;
    e.node = node_id;
    e.gen = n.alarm2_gen();
    engine_.schedule(*acts.alarm2_at, e);
  }
  if (acts.window_close_at) {
    net::SimEvent e;
    e.kind = net::EventKind::WindowClose;
    e.node = node_id;
    engine_.schedule(*acts.window_close_at, e);
  }
  if (acts.reboot_done_at) {
    net::SimEvent e;
    e.kind = net::EventKind::RebootDone;
    e.node = node_id;
    engine_.schedule(*acts.reboot_done_at, e);
  }
}

void Simulation::process_commands(int64_t now_ms, ctrl::Controller::Commands&& cmds) {
  for (auto& o : cmds.frames) {
    bool listening = nodes_.count(o.dst) && nodes_.at(o.dst).is_listening();
    auto pd = net_.send(now_ms, o.frame, coord_, o.dst, listening);
    if (pd) deliver_later(*pd);
  }
  for (const auto& [node_id, at_ms] : cmds.transfers_done) {
    net::SimEvent e;
    e.kind = net::EventKind::TransferComplete;
    e.node = node_id;
    engine_.schedule(at_ms, e);
  }
}

void Simulation::deliver_later(const net::PendingDelivery& pd) {
  net::SimEvent e;
  e.kind = net::EventKind::FrameArrival;
  e.node = pd.dst;
  e.src = pd.src;
  e.dst = pd.dst;
  e.frame_id = pd.frame_id;
  e.frame = pd.frame;
  engine_.schedule(pd.arrival_ms, e);
}

std::vector<std::string> Simulation::store_mismatches() const {
  std::vector<std::string> out;
  for (const auto& [id, n] : nodes_) {
    if (ctrl_.busy(id) || n.transfer_active() || n.mode() == node::Mode::Rebooting) continue;
    auto row = db_->device(id);
    if (!row) {
      out.push_back("node " + std::to_string(id) + ": no device row");
      continue;
    }
    std::optional<int> live;
    if (n.running()) live = n.running()->value();
    if (row->running_firmware != live)
      out.push_back("node " + std::to_string(id) + ": firmware row=" +
                    (row->running_firmware ? std::to_string(*row->running_firmware) : "none") +
                    " node=" + (live ? std::to_string(*live) : "none"));
    std::map<proto::AppKind, uint32_t> expect;
    if (n.schedule())
      for (proto::AppKind k : proto::kAllApps)
        if (proto::is_periodic(k) && (n.schedule()->all_bits() & proto::app_bit(k)))
          expect[k] = *n.schedule()->interval_of(k);
    if (row->sensing_intervals != expect)
      out.push_back("node " + std::to_string(id) + ": sensing intervals diverge");
  }
  return out;
}

void check_frame_conservation(const std::vector<std::string>& lines) {
  struct Tally {
    int sent = 0, recv = 0, drop = 0, buf = 0, flush = 0, inflight = 0;
  };
  std::map<uint64_t, Tally> tally;
  for (const std::string& line : lines) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f = split_tabs(line);
    if (f.size() < 5) continue;
    const std::string& kind = f[1];
    int Tally::*slot = nullptr;
    if (kind == "SEND")
      slot = &Tally::sent;
    else if (kind == "RECV")
      slot = &Tally::recv;
    else if (kind == "DROP")
      slot = &Tally::drop;
    else if (kind == "BUFFER")
      slot = &Tally::buf;
    else if (kind == "FLUSH")
      slot = &Tally::flush;
    else if (kind == "INFLIGHT")
      slot = &Tally::inflight;
    else
      continue;
    auto id_tok = detail_token(f[4], "id=");
    if (!id_tok) throw Error("frame log line without id: " + line);
    ++(tally[parse_u64(*id_tok, line)].*slot);
  }
  for (const auto& [id, c] : tally) {
    std::string tag = "frame " + std::to_string(id);
    if (c.sent != 1) throw Error(tag + " sent " + std::to_string(c.sent) + " times");
    int terminals = c.recv + c.drop + c.inflight;
    bool parked = c.buf == c.flush + 1;
    if (terminals == 1) {
      bool dropped_from_buffer = c.drop == 1 && parked;
      if (c.buf != c.flush && !dropped_from_buffer)
        throw Error(tag + " buffered without matching flush");
    } else if (terminals == 0) {
      if (!parked) throw Error(tag + " vanished (no receive, drop, park, or in-flight)");
    } else {
      throw Error(tag + " terminated " + std::to_string(terminals) + " ways");
    }
  }
}

void check_ed_isolation(const std::vector<std::string>& lines, const net::Topology& topo) {
  std::map<int, int> parent;
  for (int e : topo.end_devices()) parent[e] = *topo.node(e).parent_id;
  for (const std::string& line : lines) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f = split_tabs(line);
    if (f.size() < 5 || f[1] != "SEND") continue;
    auto route_tok = detail_token(f[4], "route=");
    if (!route_tok) throw Error("SEND without route: " + line);
    std::vector<int> route = parse_route(*route_tok);
    for (std::size_t i = 0; i < route.size(); ++i) {
      auto it = parent.find(route[i]);
      if (it == parent.end()) continue;
      bool first = i == 0, last = i + 1 == route.size();
      if (!first && !last) throw Error("end device relays traffic: " + line);
      if (route.size() < 2) continue;
      if (first && route[1] != it->second)
        throw Error("end device bypasses its parent: " + line);
      if (last && route[route.size() - 2] != it->second)
        throw Error("end device reached around its parent: " + line);
    }
  }
}

}  // namespace ssn::sim
