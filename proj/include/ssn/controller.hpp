#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ssn/energy.hpp"
#include "ssn/netsim.hpp"
#include "ssn/proto.hpp"
#include "ssn/store.hpp"

// Central controller: admits application requests to the best node, picks one
// of the four deployment cases, sequences OTA commands behind the node's
// listen windows, and reallocates applications away from low-battery nodes.
namespace ssn::ctrl {

using proto::AppKind;
using proto::FirmwareId;

inline constexpr int kBatteryFloorPct = 20;   // strict: eligibility needs > 20
inline constexpr int kAckTimeoutWindows = 3;  // listen windows before a resend
inline constexpr int kMaxRetries = 1;

struct AppRequest {
  AppKind kind;
  std::optional<uint32_t> sensing_interval_s;  // absent for presence
  int64_t arrival_ms = 0;
  std::optional<uint32_t> activity_s;          // requested lifetime in the network
};

// Deployment decision outcomes. Stop covers removing the last application,
// which leaves the node idle; admission planning only ever yields 1-4.
enum class PlanCase { NoOp = 1, Reconfigure = 2, StartStored = 3, SendAndStart = 4, Stop = 5 };

std::string_view plan_case_name(PlanCase c);

// The controller's snapshot of one node, assembled from the store and the
// admitted-application ledger; plan functions are pure over this view.
struct NodeView {
  int node_id = -1;
  std::optional<FirmwareId> running;
  std::set<int> sd_firmwares;
  std::vector<proto::AppConfig> admitted;  // every application instance on the node
  int battery_pct = 100;
  uint32_t listen_interval_min = 1;
};

struct DeploymentPlan {
  int node_id = -1;
  PlanCase plan_case = PlanCase::NoOp;
  std::optional<FirmwareId> target_firmware;     // firmware once the plan lands
  std::vector<proto::Frame> frames;              // payloads in dispatch order
  std::vector<proto::AppConfig> result_configs;  // admitted set once the plan lands
};

// Highest battery wins, ties go to the lowest node id; only nodes strictly
// above the battery floor are eligible. Throws NoEligibleNode.
int select_node(const std::vector<NodeView>& candidates, const AppRequest& request);

// The four-way case analysis for admitting `request` onto `node`.
DeploymentPlan plan_deployment(const NodeView& node, const AppRequest& request);

// Reprogramming after removing one admitted instance; `remaining` is the
// admitted set that should survive on the node.
DeploymentPlan plan_removal(const NodeView& node, const std::vector<proto::AppConfig>& remaining);

class Controller {
 public:
  Controller(store::Store* db, net::EventLog* log, const net::Topology* topo,
             const energy::CurrentDraws* draws, net::LinkModel lm);

  // Frames the controller wants transmitted plus image-transfer completions
  // for the simulator to schedule.
  struct Commands {
    struct Out {
      int dst;
      proto::Frame frame;
    };
    std::vector<Out> frames;
    std::vector<std::pair<int, int64_t>> transfers_done;  // (node, completion time)
  };

  // Seeds the controller's ledger for a node provisioned outside the
  // admission flow (scenario bootstrap).
  void bootstrap_allocation(int node_id, const std::vector<proto::AppConfig>& configs,
                            std::optional<FirmwareId> fw, uint32_t listen_min);

  Commands on_app_arrival(int64_t now_ms, const AppRequest& request);
  // Removes the oldest admitted instance of `kind`; plans the complement.
  Commands on_app_departure(int64_t now_ms, AppKind kind);
  Commands on_frame(int64_t now_ms, int src, const proto::Frame& frame);

  const std::vector<std::string>& failures() const { return failures_; }
  NodeView view_of(int node_id) const;
  // True while a plan is in flight or queued for the node.
  bool busy(int node_id) const;

 private:
  struct Instance {
    long id;
    int node_id;
    AppRequest request;
  };
  // One queued intent for a node. Work enqueued while the node is idle is
  // planned immediately; work behind an in-flight plan is planned only when it
  // reaches the head, so the case analysis always sees fresh node state.
  struct Work {
    std::optional<AppRequest> admit_request;  // set for admissions
    bool is_removal = false;
    std::optional<DeploymentPlan> plan;       // pre-planned when enqueued idle
  };
  struct ActivePlan {
    DeploymentPlan plan;
    std::optional<AppRequest> admission_request;  // instance recorded on completion
    std::size_t next_frame = 0;
    bool awaiting_ack = false;
    int windows_waited = 0;
    int retries = 0;
  };
  struct NodeTask {
    std::deque<Work> queue;
    std::optional<ActivePlan> active;
    bool evicting = false;  // low-battery handling underway or battery still low
  };

  enum class Ack { None, ProgOk, Info };
  static Ack ack_for(const proto::Frame& f);

  Commands admit(int64_t now_ms, const AppRequest& request, std::optional<int> exclude_node,
                 bool redeploy);
  void send_current(int64_t now_ms, int node_id, Commands& out);
  void finish_plan(int64_t now_ms, int node_id, const std::optional<proto::InfoFrame>& boot_info);
  void apply_ack_effect(int64_t now_ms, int node_id, const proto::Frame& acked);
  Commands handle_listen(int64_t now_ms, int node_id);
  Commands handle_prog_ok(int64_t now_ms, int node_id);
  Commands handle_info(int64_t now_ms, int node_id, const proto::InfoFrame& f);
  Commands handle_data(int64_t now_ms, int node_id, const proto::SensorDataFrame& f);
  Commands reallocate(int64_t now_ms, int node_id);
  std::vector<int> candidate_ids(std::optional<int> exclude) const;

  store::Store* db_;
  net::EventLog* log_;
  const net::Topology* topo_;
  const energy::CurrentDraws* draws_;
  net::LinkModel lm_;

  std::vector<Instance> instances_;
  long next_instance_id_ = 1;
  std::map<int, NodeTask> tasks_;
  std::vector<std::string> failures_;
};

}  // namespace ssn::ctrl
