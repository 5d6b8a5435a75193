#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "ssn/proto.hpp"

// Discrete-event plumbing: the mesh topology, the serial/radio link chain with
// its firmware-transfer timing model, parent-side buffering for sleeping end
// devices, and the append-only event log that every assertion reads.
namespace ssn::net {

enum class NodeRole { Coordinator, Router, EndDevice };

std::string_view role_name(NodeRole r);
NodeRole role_from_name(std::string_view name);  // throws BadTopology

struct TopoNode {
  int node_id = -1;
  NodeRole role = NodeRole::Router;
  std::optional<int> parent_id;  // end devices only
  double serial_bps = 115200.0;  // MCU <-> radio link; controller link for the coordinator
};

// Static mesh: radio links join the coordinator and routers; an end device
// hangs off exactly one parent and all its traffic goes through it.
class Topology {
 public:
  void add_node(int id, NodeRole role, std::optional<int> parent = std::nullopt);
  void add_link(int a, int b);
  void set_serial_bps(int id, double bps);

  void validate() const;  // throws BadTopology on any broken invariant

  bool has_node(int id) const { return nodes_.count(id) > 0; }
  const TopoNode& node(int id) const;
  int coordinator_id() const;               // throws BadTopology if absent
  std::vector<int> node_ids() const;        // ascending
  std::vector<int> end_devices() const;     // ascending
  const std::set<int>& neighbors(int id) const;

  // Shortest node path src..dst. End-device legs go through the parent; ties
  // between equal-length radio paths break toward lower node ids.
  std::vector<int> route(int src, int dst) const;  // throws NoRoute
  int hop_count(int src, int dst) const;           // edges along route()

 private:
  std::map<int, TopoNode> nodes_;
  std::map<int, std::set<int>> links_;
};

struct LinkModel {
  double radio_bps = 250000.0;
  // Fixed per-chunk processing cost during image transfers (flash write plus
  // bootloader bookkeeping), tuned against the measured update times.
  double per_frame_delay_ms = 89.0;
  int ota_chunk_payload = 75;   // image bytes carried per transfer frame
  int frame_payload_cap = 81;   // 802.15.4 payload accounting unit
};

inline constexpr double kDefaultNodeSerialBps = 115200.0;
inline constexpr double kDefaultCoordSerialBps = 38400.0;
inline constexpr double kThroughputCeilingBps = 35000.0;

// One firmware image transfer, sized in radio frames.
struct TransferDescriptor {
  proto::FirmwareId firmware;
  long size_bytes = 0;
  long frames = 0;
  int hop_count = 1;

  long bytes_sent() const { return frames * 81; }
};

// Descriptors for firmwares 1, 3, 7 and 15 carry measured frame counts; the
// rest are sized by application count and chunked at ota_chunk_payload.
TransferDescriptor descriptor_for(proto::FirmwareId fw, const LinkModel& lm, int hop_count = 1);

struct TransferTiming {
  double duration_s = 0;
  double effective_rate_bps = 0;  // bytes_sent * 8 / duration
};

// Image transfer: every frame crosses controller serial, the radio hops and
// the target's serial link, then pays the per-frame processing delay.
TransferTiming ota_transfer(const TransferDescriptor& desc, const LinkModel& lm,
                            double coord_serial_bps = kDefaultCoordSerialBps,
                            double node_serial_bps = kDefaultNodeSerialBps);

// One-shot command frame (no processing delay), e.g. -start_new_program.
double command_time_s(int phy_bytes, const LinkModel& lm, int hop_count = 1,
                      double coord_serial_bps = kDefaultCoordSerialBps,
                      double node_serial_bps = kDefaultNodeSerialBps);

// Sustained store-and-forward rate of the serial/radio chain, capped at the
// stack ceiling. Throws NoRoute.
double max_throughput(const Topology& topo, int src, int dst, const LinkModel& lm);

enum class EventKind {
  Alarm1,
  Alarm2,
  PirDetect,
  FrameArrival,
  TransferComplete,
  AppArrival,
  AppDeparture,
  WindowClose,
  RebootDone,
  BatteryOverride,
};

std::string_view event_kind_name(EventKind k);

struct SimEvent {
  EventKind kind = EventKind::Alarm1;
  int node = -1;  // primary node involved
  int src = -1;
  int dst = -1;
  uint64_t frame_id = 0;
  std::optional<proto::Frame> frame;
  std::optional<proto::AppKind> app;
  std::optional<uint32_t> interval_s;
  std::optional<uint32_t> activity_s;
  int value = 0;   // battery percent, firmware id, ... depending on kind
  long gen = 0;    // alarm generation; stale generations are ignored
};

// Priority queue over (time, insertion order). Single-threaded by design; the
// whole simulation is driven from run_until.
class Engine {
 public:
  int64_t now_ms() const { return now_; }

  // Throws TimeReversal when time_ms < now.
  void schedule(int64_t time_ms, SimEvent ev);

  // Processes every event with time <= t_ms in deterministic order, then
  // leaves the clock at t_ms.
  void run_until(int64_t t_ms, const std::function<void(const SimEvent&)>& handler);

  bool empty() const { return queue_.empty(); }
  std::size_t pending_count() const { return queue_.size(); }
  // Remaining events in processing order; used for end-of-run reconciliation.
  std::vector<SimEvent> pending() const;

 private:
  struct Entry {
    int64_t time;
    uint64_t seq;
    SimEvent ev;
    bool operator>(const Entry& o) const {
      return time != o.time ? time > o.time : seq > o.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  int64_t now_ = 0;
  uint64_t next_seq_ = 0;
};

// Append-only, tab-separated trace: `time_ms kind src dst detail`. Tests and
// the CLI validators consume it line by line.
class EventLog {
 public:
  void set_seed(uint64_t seed);
  void append(int64_t time_ms, std::string_view kind, std::string_view src, std::string_view dst,
              std::string_view detail);
  void append(int64_t time_ms, std::string_view kind, int src, int dst, std::string_view detail);
  void decide(int64_t time_ms, int case_number, int node_id, int firmware_id);

  const std::vector<std::string>& lines() const { return lines_; }
  std::string str() const;
  void write_to(const std::string& path) const;

 private:
  std::vector<std::string> lines_;
};

struct PendingDelivery {
  uint64_t frame_id;
  proto::Frame frame;
  int src;
  int dst;
  int64_t arrival_ms;
  std::string route;  // "a>b>c" node path
};

// Frame transport over a fixed topology. Owns the per-parent buffers for
// sleeping end devices and the injected/delivered/dropped accounting used by
// the conservation check.
class Network {
 public:
  static constexpr std::size_t kParentBufferCap = 64;

  Network(Topology topo, LinkModel lm, EventLog* log);

  const Topology& topology() const { return topo_; }
  const LinkModel& link_model() const { return lm_; }

  // Whole-chain transit: source serial leg, radio hops, destination serial leg.
  int64_t transit_ms(int phy_bytes, int src, int dst) const;

  // Injects a frame. Logs SEND (with the route) and either returns the
  // scheduled delivery or parks the frame at the end device's parent.
  std::optional<PendingDelivery> send(int64_t now_ms, const proto::Frame& f, int src, int dst,
                                      bool dst_listening);

  // Releases frames parked for `child`; arrivals are relative to wake_ms.
  std::vector<PendingDelivery> wake(int64_t wake_ms, int child);

  void mark_delivered(uint64_t frame_id);

  uint64_t injected() const { return injected_; }
  uint64_t delivered() const { return delivered_; }
  uint64_t dropped() const { return dropped_; }
  std::size_t buffered_count() const;

 private:
  struct Parked {
    uint64_t frame_id;
    proto::Frame frame;
    int src;
    int dst;
  };

  Topology topo_;
  LinkModel lm_;
  EventLog* log_;
  std::map<int, std::deque<Parked>> buffers_;  // parent id -> queue
  uint64_t next_frame_id_ = 1;
  uint64_t injected_ = 0;
  uint64_t delivered_ = 0;
  uint64_t dropped_ = 0;
};

std::string route_string(const std::vector<int>& route);

}  // namespace ssn::net
