#include "ssn/controller.hpp"

#include <algorithm>
#include <cmath>

#include "ssn/errors.hpp"

namespace ssn::ctrl {

namespace {

std::set<AppKind> kinds_of(const std::vector<proto::AppConfig>& configs) {
  std::set<AppKind> out;
  for (const auto& c : configs) out.insert(c.kind);
  return out;
}

std::vector<proto::AppConfig> periodic_of(const std::vector<proto::AppConfig>& configs) {
  std::vector<proto::AppConfig> out;
  for (const auto& c : configs)
    if (proto::is_periodic(c.kind)) out.push_back(c);
  return out;
}

std::optional<proto::Schedule> merged_schedule(const std::vector<proto::AppConfig>& configs) {
  std::vector<proto::AppConfig> periodic = periodic_of(configs);
  if (periodic.empty()) return std::nullopt;
  return proto::build_schedule(periodic);
}

std::string fw_text(const std::optional<FirmwareId>& fw) {
  return fw ? std::to_string(fw->value()) : std::string("none");
}

}  // namespace

std::string_view plan_case_name(PlanCase c) {
  switch (c) {
    case PlanCase::NoOp: return "noop";
    case PlanCase::Reconfigure: return "reconfigure";
    case PlanCase::StartStored: return "start_stored";
    case PlanCase::SendAndStart: return "send_and_start";
    case PlanCase::Stop: return "stop";
  }
  return "?";
}

int select_node(const std::vector<NodeView>& candidates, const AppRequest&) {
  const NodeView* best = nullptr;
  for (const NodeView& v : candidates) {
    if (v.battery_pct <= kBatteryFloorPct) continue;
    if (!best || v.battery_pct > best->battery_pct ||
        (v.battery_pct == best->battery_pct && v.node_id < best->node_id))
      best = &v;
  }
  if (!best) throw NoEligibleNode();
  return best->node_id;
}

DeploymentPlan plan_deployment(const NodeView& node, const AppRequest& request) {
  if (proto::is_periodic(request.kind) &&
      (!request.sensing_interval_s || *request.sensing_interval_s < 1))
    throw Error("periodic application request needs a sensing interval");

  DeploymentPlan p;
  p.node_id = node.node_id;
  p.result_configs = node.admitted;
  proto::AppConfig cfg{request.kind,
                       proto::is_periodic(request.kind) ? request.sensing_interval_s
                                                        : std::nullopt};
  p.result_configs.push_back(cfg);

  if (node.running && node.running->has(request.kind)) {
    p.target_firmware = node.running;
    if (!proto::is_periodic(request.kind)) {
      p.plan_case = PlanCase::NoOp;  // presence is already being served
      return p;
    }
    bool same_interval = std::any_of(
        node.admitted.begin(), node.admitted.end(), [&](const proto::AppConfig& a) {
          return a.kind == request.kind && a.sensing_interval_s == request.sensing_interval_s;
        });
    if (same_interval) {
      p.plan_case = PlanCase::NoOp;
      return p;
    }
    p.plan_case = PlanCase::Reconfigure;
    p.frames.push_back(proto::ScheduleUpdateFrame{*merged_schedule(p.result_configs)});
    return p;
  }

  std::set<AppKind> apps =
      node.running ? proto::apps_of(*node.running) : std::set<AppKind>{};
  apps.insert(request.kind);
  FirmwareId target = proto::firmware_of(apps);
  p.target_firmware = target;
  if (node.sd_firmwares.count(target.value())) {
    p.plan_case = PlanCase::StartStored;
    p.frames.push_back(proto::OtaStartFrame{target});
  } else {
    p.plan_case = PlanCase::SendAndStart;
    long size = net::descriptor_for(target, net::LinkModel{}).size_bytes;
    p.frames.push_back(proto::OtaSendFrame{target, static_cast<uint32_t>(size)});
    p.frames.push_back(proto::OtaStartFrame{target});
  }
  return p;
}

DeploymentPlan plan_removal(const NodeView& node,
                            const std::vector<proto::AppConfig>& remaining) {
  DeploymentPlan p;
  p.node_id = node.node_id;
  p.result_configs = remaining;
  if (!node.running) {
    p.plan_case = PlanCase::NoOp;
    return p;
  }
  std::set<AppKind> rem_kinds = kinds_of(remaining);
  std::set<AppKind> run_kinds = proto::apps_of(*node.running);
  if (rem_kinds == run_kinds) {
    auto sched = merged_schedule(remaining);
    if (!sched) {
      p.plan_case = PlanCase::NoOp;  // only event-driven apps left; nothing to retime
      p.target_firmware = node.running;
      return p;
    }
    p.plan_case = PlanCase::Reconfigure;
    p.target_firmware = node.running;
    p.frames.push_back(proto::ScheduleUpdateFrame{*sched});
    return p;
  }
  if (rem_kinds.empty()) {
    p.plan_case = PlanCase::Stop;
    p.frames.push_back(proto::OtaDeleteFrame{*node.running});
    return p;
  }
  FirmwareId target = proto::firmware_of(rem_kinds);
  p.target_firmware = target;
  if (node.sd_firmwares.count(target.value())) {
    p.plan_case = PlanCase::StartStored;
    p.frames.push_back(proto::OtaStartFrame{target});
  } else {
    p.plan_case = PlanCase::SendAndStart;
    long size = net::descriptor_for(target, net::LinkModel{}).size_bytes;
    p.frames.push_back(proto::OtaSendFrame{target, static_cast<uint32_t>(size)});
    p.frames.push_back(proto::OtaStartFrame{target});
  }
  return p;
}

Controller::Controller(store::Store* db, net::EventLog* log, const net::Topology* topo,
                       const energy::CurrentDraws* draws, net::LinkModel lm)
    : db_(db), log_(log), topo_(topo), draws_(draws), lm_(lm) {}

Controller::Ack Controller::ack_for(const proto::Frame& f) {
  if (std::holds_alternative<proto::ScheduleUpdateFrame>(f) ||
      std::holds_alternative<proto::OtaSendFrame>(f) ||
      std::holds_alternative<proto::OtaDeleteFrame>(f))
    return Ack::ProgOk;
  if (std::holds_alternative<proto::OtaStartFrame>(f)) return Ack::Info;
  return Ack::None;
}

bool Controller::busy(int node_id) const {
  auto it = tasks_.find(node_id);
  return it != tasks_.end() && (it->second.active || !it->second.queue.empty());
}

NodeView Controller::view_of(int node_id) const {
  NodeView v;
  v.node_id = node_id;
  if (auto row = db_->device(node_id)) {
    v.battery_pct = row->battery_pct;
    v.listen_interval_min = row->listen_interval_min;
    if (row->running_firmware) v.running = FirmwareId(*row->running_firmware);
  }
  for (int fw : db_->sd_contents(node_id)) v.sd_firmwares.insert(fw);
  for (const Instance& i : instances_)
    if (i.node_id == node_id)
      v.admitted.push_back({i.request.kind, i.request.sensing_interval_s});
  return v;
}

std::vector<int> Controller::candidate_ids(std::optional<int> exclude) const {
  std::vector<int> out;
  int coord = topo_->coordinator_id();
  for (const auto& [id, row] : db_->devices()) {
    if (id == coord) continue;
    if (exclude && id == *exclude) continue;
    out.push_back(id);
  }
  return out;
}

void Controller::bootstrap_allocation(int node_id, const std::vector<proto::AppConfig>& configs,
                                      std::optional<FirmwareId> fw, uint32_t listen_min) {
  store::DeviceRow row;
  row.device_id = node_id;
  row.battery_pct = 100;
  row.listen_interval_min = listen_min;
  if (fw) row.running_firmware = fw->value();
  if (auto sched = merged_schedule(configs))
    for (AppKind k : proto::kAllApps)
      if (proto::is_periodic(k) && (sched->all_bits() & proto::app_bit(k)))
        row.sensing_intervals[k] = *sched->interval_of(k);
  db_->upsert_device(row);
  if (fw) db_->record_sd_contents(node_id, {fw->value()});
  for (const proto::AppConfig& c : configs)
    instances_.push_back({next_instance_id_++, node_id, AppRequest{c.kind, c.sensing_interval_s, 0, std::nullopt}});
  tasks_[node_id];
}

Controller::Commands Controller::on_app_arrival(int64_t now_ms, const AppRequest& request) {
  return admit(now_ms, request, std::nullopt, false);
}

Controller::Commands Controller::admit(int64_t now_ms, const AppRequest& request,
                                       std::optional<int> exclude_node, bool) {
  Commands out;
  std::vector<NodeView> views;
  for (int id : candidate_ids(exclude_node)) views.push_back(view_of(id));
  int target;
  try {
    target = select_node(views, request);
  } catch (const NoEligibleNode&) {
    log_->append(now_ms, "UNDEPLOYABLE", -1, -1,
                 "app=" + std::string(proto::app_tag(request.kind)));
    failures_.push_back("no eligible node for " + std::string(proto::app_name(request.kind)));
    return out;
  }
  NodeTask& t = tasks_[target];
  if (!t.active && t.queue.empty()) {
    DeploymentPlan plan = plan_deployment(view_of(target), request);
    log_->decide(now_ms, static_cast<int>(plan.plan_case), target,
                 plan.target_firmware ? plan.target_firmware->value() : 0);
    if (plan.plan_case == PlanCase::NoOp) {
      instances_.push_back({next_instance_id_++, target, request});
      return out;
    }
    t.queue.push_back(Work{request, false, std::move(plan)});
  } else {
    t.queue.push_back(Work{request, false, std::nullopt});
  }
  return out;
}

Controller::Commands Controller::on_app_departure(int64_t now_ms, AppKind kind) {
  Commands out;
  auto oldest = instances_.end();
  for (auto it = instances_.begin(); it != instances_.end(); ++it) {
    if (it->request.kind != kind) continue;
    if (oldest == instances_.end() || it->request.arrival_ms < oldest->request.arrival_ms ||
        (it->request.arrival_ms == oldest->request.arrival_ms && it->id < oldest->id))
      oldest = it;
  }
  if (oldest == instances_.end()) {
    log_->append(now_ms, "NOTE", -1, -1,
                 "departure ignored: no admitted " + std::string(proto::app_name(kind)));
    return out;
  }
  int node = oldest->node_id;
  instances_.erase(oldest);
  NodeTask& t = tasks_[node];
  if (!t.active && t.queue.empty()) {
    NodeView view = view_of(node);
    DeploymentPlan plan = plan_removal(view, view.admitted);
    log_->append(now_ms, "REPROGRAM", node, -1,
                 "case=" + std::string(plan_case_name(plan.plan_case)) +
                     " fw=" + fw_text(plan.target_firmware));
    if (plan.plan_case != PlanCase::NoOp)
      t.queue.push_back(Work{std::nullopt, true, std::move(plan)});
  } else {
    t.queue.push_back(Work{std::nullopt, true, std::nullopt});
  }
  return out;
}

void Controller::send_current(int64_t now_ms, int node_id, Commands& out) {
  ActivePlan& ap = *tasks_[node_id].active;
  const proto::Frame& f = ap.plan.frames[ap.next_frame];
  proto::FrameClass cls = std::holds_alternative<proto::ScheduleUpdateFrame>(f)
                              ? proto::FrameClass::Standard
                              : proto::FrameClass::Ota;
  out.frames.push_back({node_id, proto::FrameKindNotice{cls}});
  out.frames.push_back({node_id, f});
  ap.awaiting_ack = true;
  ap.windows_waited = 0;
  if (const auto* send = std::get_if<proto::OtaSendFrame>(&f)) {
    int coord = topo_->coordinator_id();
    net::TransferDescriptor desc =
        net::descriptor_for(send->firmware, lm_, topo_->hop_count(coord, node_id));
    net::TransferTiming timing = ota_transfer(desc, lm_, topo_->node(coord).serial_bps,
                                              topo_->node(node_id).serial_bps);
    int64_t done = now_ms + std::llround(timing.duration_s * 1000.0);
    out.transfers_done.push_back({node_id, done});
    log_->append(now_ms, "XFER_START", coord, node_id,
                 "fw=" + std::to_string(send->firmware.value()) +
                     " frames=" + std::to_string(desc.frames) +
                     " bytes=" + std::to_string(desc.bytes_sent()));
  }
}

Controller::Commands Controller::handle_listen(int64_t now_ms, int node_id) {
  Commands out;
  NodeTask& t = tasks_[node_id];
  if (t.active) {
    ActivePlan& ap = *t.active;
    if (!ap.awaiting_ack) {
      send_current(now_ms, node_id, out);
      return out;
    }
    ++ap.windows_waited;
    if (ap.windows_waited < kAckTimeoutWindows) return out;
    if (ap.retries < kMaxRetries) {
      ++ap.retries;
      log_->append(now_ms, "RETRY", node_id, -1,
                   "case=" + std::string(plan_case_name(ap.plan.plan_case)));
      send_current(now_ms, node_id, out);
      return out;
    }
    log_->append(now_ms, "FAILED", node_id, -1,
                 "case=" + std::string(plan_case_name(ap.plan.plan_case)) +
                     " fw=" + fw_text(ap.plan.target_firmware));
    failures_.push_back("plan failed on node " + std::to_string(node_id));
    t.active.reset();
  }
  while (!t.active && !t.queue.empty()) {
    Work w = std::move(t.queue.front());
    t.queue.pop_front();
    DeploymentPlan plan;
    if (w.plan) {
      plan = std::move(*w.plan);
    } else if (w.is_removal) {
      NodeView view = view_of(node_id);
      plan = plan_removal(view, view.admitted);
      log_->append(now_ms, "REPROGRAM", node_id, -1,
                   "case=" + std::string(plan_case_name(plan.plan_case)) +
                       " fw=" + fw_text(plan.target_firmware));
    } else {
      plan = plan_deployment(view_of(node_id), *w.admit_request);
      log_->decide(now_ms, static_cast<int>(plan.plan_case), node_id,
                   plan.target_firmware ? plan.target_firmware->value() : 0);
    }
    if (plan.plan_case == PlanCase::NoOp) {
      if (w.admit_request)
        instances_.push_back({next_instance_id_++, node_id, *w.admit_request});
      continue;
    }
    ActivePlan ap;
    ap.plan = std::move(plan);
    ap.admission_request = w.admit_request;
    t.active = std::move(ap);
    send_current(now_ms, node_id, out);
  }
  return out;
}

void Controller::apply_ack_effect(int64_t now_ms, int node_id, const proto::Frame& acked) {
  if (const auto* upd = std::get_if<proto::ScheduleUpdateFrame>(&acked)) {
    auto row = db_->device(node_id);
    if (!row) return;
    row->sensing_intervals.clear();
    for (AppKind k : proto::kAllApps)
      if (proto::is_periodic(k) && (upd->schedule.all_bits() & proto::app_bit(k)))
        row->sensing_intervals[k] = *upd->schedule.interval_of(k);
    db_->upsert_device(*row);
  } else if (const auto* send = std::get_if<proto::OtaSendFrame>(&acked)) {
    auto sd = db_->sd_contents(node_id);
    if (!std::count(sd.begin(), sd.end(), send->firmware.value()))
      db_->add_sd_entry(node_id, send->firmware.value());
  } else if (const auto* del = std::get_if<proto::OtaDeleteFrame>(&acked)) {
    db_->remove_sd_entry(node_id, del->firmware.value());
    if (auto row = db_->device(node_id)) {
      row->running_firmware.reset();
      row->sensing_intervals.clear();
      db_->upsert_device(*row);
    }
  }
  (void)now_ms;
}

void Controller::finish_plan(int64_t now_ms, int node_id,
                             const std::optional<proto::InfoFrame>& boot_info) {
  NodeTask& t = tasks_[node_id];
  ActivePlan done = std::move(*t.active);
  t.active.reset();
  if (done.admission_request)
    instances_.push_back({next_instance_id_++, node_id, *done.admission_request});

  bool booted = done.plan.plan_case == PlanCase::StartStored ||
                done.plan.plan_case == PlanCase::SendAndStart;
  if (!booted || !boot_info) return;

  // A freshly booted image falls back to the node's remembered intervals; if
  // the admitted set needs a different merged timetable, resync it now.
  auto desired = merged_schedule(done.plan.result_configs);
  if (!desired) return;
  std::vector<proto::AppConfig> node_cfgs;
  for (const auto& [k, s] : boot_info->sensor_intervals) node_cfgs.push_back({k, s});
  bool in_sync = !node_cfgs.empty() && proto::build_schedule(node_cfgs) == *desired;
  if (in_sync) return;
  DeploymentPlan fu;
  fu.node_id = node_id;
  fu.plan_case = PlanCase::Reconfigure;
  fu.target_firmware = done.plan.target_firmware;
  fu.result_configs = done.plan.result_configs;
  fu.frames.push_back(proto::ScheduleUpdateFrame{*desired});
  log_->append(now_ms, "FOLLOWUP", node_id, -1, "schedule_resync");
  t.queue.push_front(Work{std::nullopt, false, std::move(fu)});
}

Controller::Commands Controller::handle_prog_ok(int64_t now_ms, int node_id) {
  Commands out;
  NodeTask& t = tasks_[node_id];
  if (!t.active || !t.active->awaiting_ack ||
      ack_for(t.active->plan.frames[t.active->next_frame]) != Ack::ProgOk) {
    log_->append(now_ms, "NOTE", node_id, -1, "stray ack ignored");
    return out;
  }
  ActivePlan& ap = *t.active;
  apply_ack_effect(now_ms, node_id, ap.plan.frames[ap.next_frame]);
  ++ap.next_frame;
  ap.awaiting_ack = false;
  ap.windows_waited = 0;
  ap.retries = 0;
  if (ap.next_frame == ap.plan.frames.size()) finish_plan(now_ms, node_id, std::nullopt);
  return out;
}

Controller::Commands Controller::handle_info(int64_t now_ms, int node_id,
                                             const proto::InfoFrame& f) {
  Commands out;
  store::DeviceRow row;
  if (auto existing = db_->device(node_id)) row = *existing;
  row.device_id = node_id;
  row.listen_interval_min = f.listen_interval_min;
  row.running_firmware = f.firmware.value();
  row.sensing_intervals.clear();
  for (const auto& [k, s] : f.sensor_intervals) row.sensing_intervals[k] = s;
  db_->upsert_device(row);

  NodeTask& t = tasks_[node_id];
  if (t.active && t.active->awaiting_ack &&
      ack_for(t.active->plan.frames[t.active->next_frame]) == Ack::Info) {
    ActivePlan& ap = *t.active;
    ++ap.next_frame;
    ap.awaiting_ack = false;
    if (ap.next_frame == ap.plan.frames.size()) finish_plan(now_ms, node_id, f);
  }
  return out;
}

Controller::Commands Controller::handle_data(int64_t now_ms, int node_id,
                                             const proto::SensorDataFrame& f) {
  Commands out;
  auto row = db_->device(node_id);
  if (!row || !row->running_firmware) {
    log_->append(now_ms, "NOTE", node_id, -1, "data from node with no recorded firmware");
    return out;
  }
  db_->insert_register(node_id, *row->running_firmware, now_ms, f.readings, f.battery_pct);
  row->battery_pct = f.battery_pct;
  db_->upsert_device(*row);

  NodeTask& t = tasks_[node_id];
  if (f.battery_pct < kBatteryFloorPct) {
    if (!t.evicting) {
      t.evicting = true;
      Commands realloc = reallocate(now_ms, node_id);
      for (auto& fr : realloc.frames) out.frames.push_back(std::move(fr));
      for (auto& tr : realloc.transfers_done) out.transfers_done.push_back(tr);
    }
  } else {
    t.evicting = false;
  }
  return out;
}

Controller::Commands Controller::reallocate(int64_t now_ms, int node_id) {
  Commands out;
  NodeView before = view_of(node_id);
  if (before.admitted.empty()) {
    log_->append(now_ms, "NOTE", node_id, -1, "low battery but nothing to evict");
    return out;
  }
  AppKind victim = energy::app_energy_rank(before.admitted, *draws_).front();

  std::vector<AppRequest> evicted;
  for (auto it = instances_.begin(); it != instances_.end();) {
    if (it->node_id == node_id && it->request.kind == victim) {
      evicted.push_back(it->request);
      it = instances_.erase(it);
    } else {
      ++it;
    }
  }

  NodeView after = view_of(node_id);
  std::set<AppKind> rem = kinds_of(after.admitted);
  std::string fw_new =
      rem.empty() ? "none" : std::to_string(proto::firmware_of(rem).value());
  log_->append(now_ms, "EVICT", node_id, -1,
               "app=" + std::string(proto::app_tag(victim)) +
                   " fw_old=" + fw_text(before.running) + " fw_new=" + fw_new);

  NodeTask& t = tasks_[node_id];
  if (!t.active && t.queue.empty()) {
    DeploymentPlan plan = plan_removal(after, after.admitted);
    log_->append(now_ms, "REPROGRAM", node_id, -1,
                 "case=" + std::string(plan_case_name(plan.plan_case)) +
                     " fw=" + fw_text(plan.target_firmware));
    if (plan.plan_case != PlanCase::NoOp)
      t.queue.push_back(Work{std::nullopt, true, std::move(plan)});
  } else {
    t.queue.push_back(Work{std::nullopt, true, std::nullopt});
  }

  for (const AppRequest& req : evicted) {
    Commands c = admit(now_ms, req, node_id, true);
    for (auto& fr : c.frames) out.frames.push_back(std::move(fr));
    for (auto& tr : c.transfers_done) out.transfers_done.push_back(tr);
  }
  return out;
}

Controller::Commands Controller::on_frame(int64_t now_ms, int src, const proto::Frame& frame) {
  if (std::holds_alternative<proto::ListenFrame>(frame)) return handle_listen(now_ms, src);
  if (std::holds_alternative<proto::ProgOkFrame>(frame)) return handle_prog_ok(now_ms, src);
  if (const auto* info = std::get_if<proto::InfoFrame>(&frame))
    return handle_info(now_ms, src, *info);
  if (const auto* data = std::get_if<proto::SensorDataFrame>(&frame))
    return handle_data(now_ms, src, *data);
  log_->append(now_ms, "NOTE", src, -1,
               "controller ignoring frame tag=" + std::string(proto::frame_tag(frame)));
  return {};
}

}  // namespace ssn::ctrl
