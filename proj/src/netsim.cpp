#include "ssn/netsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssn/errors.hpp"

namespace ssn::net {

namespace {

int64_t ms_of_seconds(double s) { return std::max<int64_t>(1, std::llround(s * 1000.0)); }

double serial_seconds(int phy_bytes, double bps) { return phy_bytes * 8.0 / bps; }

long ceil_div(long a, long b) { return (a + b - 1) / b; }

}  // namespace

std::string_view role_name(NodeRole r) {
  switch (r) {
    case NodeRole::Coordinator: return "coordinator";
    case NodeRole::Router: return "router";
    case NodeRole::EndDevice: return "end_device";
  }
  return "?";
}

NodeRole role_from_name(std::string_view name) {
  if (name == "coordinator") return NodeRole::Coordinator;
  if (name == "router") return NodeRole::Router;
  if (name == "end_device" || name == "enddevice") return NodeRole::EndDevice;
  throw BadTopology("unknown role \"" + std::string(name) + "\"");
}

void Topology::add_node(int id, NodeRole role, std::optional<int> parent) {
  if (id < 0) throw BadTopology("node ids must be non-negative");
  if (nodes_.count(id)) throw BadTopology("duplicate node id " + std::to_string(id));
  TopoNode n;
  n.node_id = id;
  n.role = role;
  n.parent_id = parent;
  n.serial_bps = role == NodeRole::Coordinator ? kDefaultCoordSerialBps : kDefaultNodeSerialBps;
  if (parent && role != NodeRole::EndDevice)
    throw BadTopology("only end devices take a parent (node " + std::to_string(id) + ")");
  nodes_.emplace(id, n);
  links_.emplace(id, std::set<int>{});
}

void Topology::add_link(int a, int b) {
  if (!has_node(a) || !has_node(b))
    throw BadTopology("link references unknown node " + std::to_string(has_node(a) ? b : a));
  if (a == b) throw BadTopology("self-link on node " + std::to_string(a));
  if (node(a).role == NodeRole::EndDevice || node(b).role == NodeRole::EndDevice)
    throw BadTopology("radio links join coordinator and routers only");
  links_[a].insert(b);
  links_[b].insert(a);
}

void Topology::set_serial_bps(int id, double bps) {
  if (!has_node(id)) throw BadTopology("unknown node " + std::to_string(id));
  if (bps <= 0) throw BadTopology("serial rate must be positive");
  nodes_[id].serial_bps = bps;
}

const TopoNode& Topology::node(int id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw BadTopology("unknown node " + std::to_string(id));
  return it->second;
}

int Topology::coordinator_id() const {
  for (const auto& [id, n] : nodes_)
    if (n.role == NodeRole::Coordinator) return id;
  throw BadTopology("no coordinator");
}

std::vector<int> Topology::node_ids() const {
  std::vector<int> out;
  for (const auto& [id, n] : nodes_) out.push_back(id);
  return out;
}

std::vector<int> Topology::end_devices() const {
  std::vector<int> out;
  for (const auto& [id, n] : nodes_)
    if (n.role == NodeRole::EndDevice) out.push_back(id);
  return out;
}

const std::set<int>& Topology::neighbors(int id) const {
  auto it = links_.find(id);
  if (it == links_.end()) throw BadTopology("unknown node " + std::to_string(id));
  return it->second;
}

void Topology::validate() const {
  int coordinators = 0;
  for (const auto& [id, n] : nodes_) {
    if (n.role == NodeRole::Coordinator) ++coordinators;
    if (n.role == NodeRole::EndDevice) {
      if (!n.parent_id) throw BadTopology("end device " + std::to_string(id) + " has no parent");
      if (!has_node(*n.parent_id))
        throw BadTopology("end device " + std::to_string(id) + " parent not in topology");
      if (node(*n.parent_id).role == NodeRole::EndDevice)
        throw BadTopology("end device " + std::to_string(id) + " parented to an end device");
    }
  }
  if (coordinators != 1)
    throw BadTopology("expected exactly one coordinator, found " + std::to_string(coordinators));

  // Radio mesh (coordinator + routers) must be connected.
  std::set<int> mesh;
  for (const auto& [id, n] : nodes_)
    if (n.role != NodeRole::EndDevice) mesh.insert(id);
  std::set<int> seen;
  std::vector<int> frontier{coordinator_id()};
  seen.insert(frontier.front());
  while (!frontier.empty()) {
    int cur = frontier.back();
    frontier.pop_back();
    for (int nb : neighbors(cur))
      if (seen.insert(nb).second) frontier.push_back(nb);
  }
  for (int id : mesh)
    if (!seen.count(id))
      throw BadTopology("router mesh is partitioned at node " + std::to_string(id));
}

std::vector<int> Topology::route(int src, int dst) const {
  if (!has_node(src) || !has_node(dst)) throw NoRoute(src, dst);
  if (src == dst) return {src};
  int a = node(src).role == NodeRole::EndDevice ? *node(src).parent_id : src;
  int b = node(dst).role == NodeRole::EndDevice ? *node(dst).parent_id : dst;

  std::vector<int> mesh_path;
  if (a == b) {
    mesh_path = {a};
  } else {
    // BFS over the radio mesh; visiting neighbors in ascending id order makes
    // the predecessor (and so the path) deterministic among equal lengths.
    std::map<int, int> pred;
    std::vector<int> frontier{a};
    pred[a] = a;
    bool found = false;
    while (!frontier.empty() && !found) {
      std::vector<int> next;
      for (int cur : frontier) {
        for (int nb : neighbors(cur)) {
          if (pred.count(nb)) continue;
          pred[nb] = cur;
          if (nb == b) {
            found = true;
            break;
          }
          next.push_back(nb);
        }
        if (found) break;
      }
      frontier = std::move(next);
    }
    if (!found) throw NoRoute(src, dst);
    for (int cur = b; cur != a; cur = pred[cur]) mesh_path.push_back(cur);
    mesh_path.push_back(a);
    std::reverse(mesh_path.begin(), mesh_path.end());
  }

  std::vector<int> path;
  if (src != a) path.push_back(src);
  path.insert(path.end(), mesh_path.begin(), mesh_path.end());
  if (dst != b) path.push_back(dst);
  return path;
}

int Topology::hop_count(int src, int dst) const {
  return static_cast<int>(route(src, dst).size()) - 1;
}

TransferDescriptor descriptor_for(proto::FirmwareId fw, const LinkModel& lm, int hop_count) {
  struct Known {
    int fw;
    long frames;
    long size;
  };
  // Measured frame counts for the four reference images.
  static constexpr Known kKnown[] = {
      {1, 982, 74080}, {3, 1058, 79704}, {7, 1061, 79754}, {15, 1071, 80506}};
  for (const Known& k : kKnown)
    if (k.fw == fw.value()) return TransferDescriptor{fw, k.size, k.frames, hop_count};
  // Image size grows with the number of bundled applications.
  static constexpr long kSizeByAppCount[] = {0, 74080, 79704, 79754, 80506};
  int apps = std::popcount(static_cast<unsigned>(fw.mask()));
  long size = kSizeByAppCount[apps];
  return TransferDescriptor{fw, size, ceil_div(size, lm.ota_chunk_payload), hop_count};
}

TransferTiming ota_transfer(const TransferDescriptor& desc, const LinkModel& lm,
                            double coord_serial_bps, double node_serial_bps) {
  if (desc.frames <= 0 || desc.size_bytes <= 0) throw Error("empty transfer descriptor");
  if (desc.hop_count < 1) throw Error("transfer needs at least one radio hop");
  int phy = lm.frame_payload_cap + proto::kPhyOverheadBytes;
  double per_frame = serial_seconds(phy, coord_serial_bps) +
                     desc.hop_count * serial_seconds(phy, lm.radio_bps) +
                     serial_seconds(phy, node_serial_bps) + lm.per_frame_delay_ms / 1000.0;
  TransferTiming t;
  t.duration_s = desc.frames * per_frame;
  t.effective_rate_bps = desc.bytes_sent() * 8.0 / t.duration_s;
  return t;
}

double command_time_s(int phy_bytes, const LinkModel& lm, int hop_count, double coord_serial_bps,
                      double node_serial_bps) {
  return serial_seconds(phy_bytes, coord_serial_bps) +
         hop_count * serial_seconds(phy_bytes, lm.radio_bps) +
         serial_seconds(phy_bytes, node_serial_bps);
}

double max_throughput(const Topology& topo, int src, int dst, const LinkModel& lm) {
  int hops = topo.hop_count(src, dst);
  int phy = lm.frame_payload_cap + proto::kPhyOverheadBytes;
  double chain = serial_seconds(phy, topo.node(src).serial_bps) +
                 hops * serial_seconds(phy, lm.radio_bps) +
                 serial_seconds(phy, topo.node(dst).serial_bps);
  double rate = lm.frame_payload_cap * 8.0 / chain;
  return std::min(rate, kThroughputCeilingBps);
}

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Alarm1: return "ALARM1";
    case EventKind::Alarm2: return "ALARM2";
    case EventKind::PirDetect: return "PIR";
    case EventKind::FrameArrival: return "ARRIVAL";
    case EventKind::TransferComplete: return "XFER_DONE";
    case EventKind::AppArrival: return "APP_ARRIVE";
    case EventKind::AppDeparture: return "APP_DEPART";
    case EventKind::WindowClose: return "WINDOW_CLOSE";
    case EventKind::RebootDone: return "REBOOT_DONE";
    case EventKind::BatteryOverride: return "BATTERY_SET";
  }
  return "?";
}

void Engine::schedule(int64_t time_ms, SimEvent ev) {
  if (time_ms < now_) throw TimeReversal(time_ms, now_);
  queue_.push(Entry{time_ms, next_seq_++, std::move(ev)});
}

void Engine::run_until(int64_t t_ms, const std::function<void(const SimEvent&)>& handler) {
  while (!queue_.empty() && queue_.top().time <= t_ms) {
    Entry e = queue_.top();
    queue_.pop();
    now_ = e.time;
    handler(e.ev);
  }
  now_ = std::max(now_, t_ms);
}

std::vector<SimEvent> Engine::pending() const {
  auto copy = queue_;
  std::vector<SimEvent> out;
  while (!copy.empty()) {
    out.push_back(copy.top().ev);
    copy.pop();
  }
  return out;
}

void EventLog::set_seed(uint64_t seed) {
  lines_.insert(lines_.begin(), "# seed=" + std::to_string(seed));
}

void EventLog::append(int64_t time_ms, std::string_view kind, std::string_view src,
                      std::string_view dst, std::string_view detail) {
  std::string line = std::to_string(time_ms);
  line += '\t';
  line += kind;
  line += '\t';
  line += src;
  line += '\t';
  line += dst;
  line += '\t';
  line += detail;
  lines_.push_back(std::move(line));
}

void EventLog::append(int64_t time_ms, std::string_view kind, int src, int dst,
                      std::string_view detail) {
  append(time_ms, kind, src < 0 ? "-" : std::to_string(src), dst < 0 ? "-" : std::to_string(dst),
         detail);
}

void EventLog::decide(int64_t time_ms, int case_number, int node_id, int firmware_id) {
  append(time_ms, "DECIDE", "case=" + std::to_string(case_number),
         "node=" + std::to_string(node_id), "fw=" + std::to_string(firmware_id));
}

std::string EventLog::str() const {
  std::string out;
  for (const std::string& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

void EventLog::write_to(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write event log to " + path);
  out << str();
}

std::string route_string(const std::vector<int>& route) {
  std::string out;
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (i) out += '>';
    out += std::to_string(route[i]);
  }
  return out;
}

Network::Network(Topology topo, LinkModel lm, EventLog* log)
    : topo_(std::move(topo)), lm_(lm), log_(log) {
  topo_.validate();
}

int64_t Network::transit_ms(int phy_bytes, int src, int dst) const {
  int hops = topo_.hop_count(src, dst);
  double s = serial_seconds(phy_bytes, topo_.node(src).serial_bps) +
             hops * serial_seconds(phy_bytes, lm_.radio_bps) +
             serial_seconds(phy_bytes, topo_.node(dst).serial_bps);
  return ms_of_seconds(s);
}

std::optional<PendingDelivery> Network::send(int64_t now_ms, const proto::Frame& f, int src,
                                             int dst, bool dst_listening) {
  int phy = proto::phy_size(f);
  std::vector<int> route = topo_.route(src, dst);
  uint64_t id = next_frame_id_++;
  ++injected_;
  if (log_)
    log_->append(now_ms, "SEND", src, dst,
                 "id=" + std::to_string(id) + " tag=" + std::string(proto::frame_tag(f)) +
                     " bytes=" + std::to_string(phy) + " route=" + route_string(route));

  bool sleepy = topo_.node(dst).role == NodeRole::EndDevice && !dst_listening;
  if (sleepy) {
    int parent = *topo_.node(dst).parent_id;
    auto& buf = buffers_[parent];
    if (buf.size() >= kParentBufferCap) {
      const Parked& oldest = buf.front();
      ++dropped_;
      if (log_)
        log_->append(now_ms, "DROP", parent, oldest.dst,
                     "id=" + std::to_string(oldest.frame_id) + " reason=buffer_overflow");
      buf.pop_front();
    }
    buf.push_back(Parked{id, f, src, dst});
    if (log_) log_->append(now_ms, "BUFFER", parent, dst, "id=" + std::to_string(id));
    return std::nullopt;
  }

  return PendingDelivery{id, f, src, dst, now_ms + transit_ms(phy, src, dst),
                         route_string(route)};
}

std::vector<PendingDelivery> Network::wake(int64_t wake_ms, int child) {
  std::vector<PendingDelivery> out;
  const TopoNode& n = topo_.node(child);
  if (n.role != NodeRole::EndDevice) return out;
  auto it = buffers_.find(*n.parent_id);
  if (it == buffers_.end()) return out;
  int64_t at = wake_ms;
  for (Parked& p : it->second) {
    int phy = proto::phy_size(p.frame);
    // Final leg only: one radio hop down plus the child's serial link.
    at += ms_of_seconds(serial_seconds(phy, lm_.radio_bps) +
                        serial_seconds(phy, n.serial_bps));
    if (log_)
      log_->append(wake_ms, "FLUSH", *n.parent_id, child, "id=" + std::to_string(p.frame_id));
    out.push_back(PendingDelivery{p.frame_id, std::move(p.frame), p.src, p.dst, at,
                                  route_string({*n.parent_id, child})});
  }
  buffers_.erase(it);
  return out;
}

void Network::mark_delivered(uint64_t) { ++delivered_; }

std::size_t Network::buffered_count() const {
  std::size_t n = 0;
  for (const auto& [id, buf] : buffers_) n += buf.size();
  return n;
}

}  // namespace ssn::net
