#include "ssn/node.hpp"

#include <algorithm>

#include "ssn/errors.hpp"

namespace ssn::node {

namespace {

struct Overloaded {
  template <typename... Fs>
  struct Set : Fs... {
    using Fs::operator()...;
  };
};

template <typename... Fs>
auto overloaded(Fs&&... fs) {
  return Overloaded::Set<std::decay_t<Fs>...>{std::forward<Fs>(fs)...};
}

void merge(Actions& into, Actions&& from) {
  for (auto& f : from.frames) into.frames.push_back(std::move(f));
  for (auto& n : from.notes) into.notes.push_back(std::move(n));
  if (from.alarm1_at) into.alarm1_at = from.alarm1_at;
  if (from.alarm2_at) into.alarm2_at = from.alarm2_at;
  if (from.window_close_at) into.window_close_at = from.window_close_at;
  if (from.reboot_done_at) into.reboot_done_at = from.reboot_done_at;
}

}  // namespace

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Sleeping: return "sleeping";
    case Mode::Sensing: return "sensing";
    case Mode::Listening: return "listening";
    case Mode::Rebooting: return "rebooting";
  }
  return "?";
}

int32_t reading_value(AppKind kind, int64_t t_ms) {
  int64_t t_s = t_ms / 1000;
  switch (kind) {
    case AppKind::Temperature: return static_cast<int32_t>(18 + t_s % 8);
    case AppKind::Humidity: return static_cast<int32_t>(40 + t_s % 25);
    case AppKind::Luminosity: return static_cast<int32_t>(200 + t_s % 400);
    case AppKind::Presence: return 1;
  }
  return 0;
}

Node::Node(int id, net::NodeRole role, const energy::CurrentDraws* draws,
           std::size_t sd_cap_images)
    : id_(id), role_(role), draws_(draws), sd_cap_(sd_cap_images) {}

bool Node::sd_has(FirmwareId fw) const {
  return std::any_of(sd_.begin(), sd_.end(),
                     [&](const SdImage& img) { return img.firmware == fw; });
}

int Node::battery_pct() const { return energy::battery_pct(battery_mAh_, capacity_mAh_); }

void Node::set_battery_pct(int pct) {
  battery_mAh_ = capacity_mAh_ * std::clamp(pct, 0, 100) / 100.0;
}

energy::NodeEnergyConfig Node::energy_config() const {
  energy::NodeEnergyConfig cfg;
  cfg.role = role_ == net::NodeRole::EndDevice ? energy::Role::EndDevice : energy::Role::Router;
  cfg.listen_interval_min = listen_interval_min_;
  cfg.battery_capacity_mAh = capacity_mAh_;
  if (running_) {
    for (AppKind k : proto::kAllApps) {
      if (!running_->has(k)) continue;
      if (proto::is_periodic(k)) {
        auto it = intervals_.find(k);
        cfg.apps.push_back({k, it != intervals_.end() ? it->second : kDefaultIntervalS});
      } else {
        cfg.apps.push_back({k, std::nullopt});
      }
    }
  }
  return cfg;
}

double Node::current_rate_mA() const {
  if (transfer_active_) {
    // Long receive: node is awake with the radio in receive for the whole image.
    double base = draws_->board_min;
    if (running_ && running_->has(AppKind::Presence)) {
      auto it = draws_->board_per_sensor.find(AppKind::Presence);
      if (it != draws_->board_per_sensor.end()) base += it->second;
    }
    return draws_->mote_on + draws_->xbee_recv + base + draws_->sd_on;
  }
  try {
    return energy::energy_rate(energy_config(), *draws_);
  } catch (const DegenerateConfig&) {
    double xbee = role_ == net::NodeRole::EndDevice ? draws_->xbee_sleep : draws_->xbee_on;
    return draws_->mote_sleep + xbee + draws_->board_min + draws_->sd_on;
  }
}

void Node::drain_to(int64_t now_ms) {
  if (now_ms <= drained_to_ms_) return;
  double elapsed_s = static_cast<double>(now_ms - drained_to_ms_) / 1000.0;
  battery_mAh_ = std::max(0.0, battery_mAh_ - current_rate_mA() * elapsed_s / 3600.0);
  drained_to_ms_ = now_ms;
}

proto::InfoFrame Node::make_info() const {
  proto::InfoFrame info{*running_, {}, listen_interval_min_};
  for (AppKind k : proto::kAllApps) {
    if (!running_->has(k) || !proto::is_periodic(k)) continue;
    auto it = intervals_.find(k);
    info.sensor_intervals[k] = it != intervals_.end() ? it->second : kDefaultIntervalS;
  }
  return info;
}

proto::SensorDataFrame Node::make_readings(int64_t now_ms, FirmwareId fired) const {
  proto::SensorDataFrame data;
  for (AppKind k : proto::kAllApps)
    if (proto::is_periodic(k) && fired.has(k)) data.readings[k] = reading_value(k, now_ms);
  data.battery_pct = battery_pct();
  return data;
}

void Node::rebuild_schedule(int64_t epoch_ms) {
  std::vector<proto::AppConfig> configs;
  for (AppKind k : proto::kAllApps) {
    if (!running_ || !running_->has(k) || !proto::is_periodic(k)) continue;
    auto it = intervals_.find(k);
    uint32_t interval = it != intervals_.end() ? it->second : kDefaultIntervalS;
    intervals_[k] = interval;
    configs.push_back({k, interval});
  }
  if (configs.empty()) {
    schedule_.reset();
    return;
  }
  schedule_ = proto::build_schedule(configs);
  sched_epoch_ms_ = epoch_ms;
  sched_pos_ = 0;
}

int64_t Node::advance_cursor() {
  ++sched_pos_;
  if (sched_pos_ >= schedule_->event_count()) {
    sched_pos_ = 0;
    sched_epoch_ms_ += static_cast<int64_t>(schedule_->hyperperiod_s()) * 1000;
  }
  return sched_epoch_ms_ + static_cast<int64_t>(schedule_->offset_of(sched_pos_)) * 1000;
}

Actions Node::provision(int64_t now_ms, std::optional<SdImage> initial,
                        const std::map<AppKind, uint32_t>& intervals, uint32_t listen_min) {
  drained_to_ms_ = now_ms;
  listen_interval_min_ = std::max(1u, listen_min);
  intervals_ = intervals;
  std::optional<FirmwareId> fw;
  if (initial) {
    if (initial->size_bytes <= 0 || initial->size_bytes > kSdImageMaxBytes)
      throw Error("initial image size out of range");
    if (!sd_has(initial->firmware)) {
      if (sd_.size() >= sd_cap_) throw SdFull();
      sd_.push_back(*initial);
    }
    fw = initial->firmware;
  }
  return boot(now_ms, fw);
}

Actions Node::boot(int64_t now_ms, std::optional<FirmwareId> fw) {
  Actions a;
  running_ = fw;
  mode_ = Mode::Sleeping;
  window_close_at_ = -1;
  transfer_active_ = false;
  incoming_.reset();
  pending_restart_.reset();
  announced_class_.reset();
  inbox_.clear();

  ++alarm1_gen_;
  ++alarm2_gen_;
  alarm1_next_ = -1;

  if (running_) {
    a.frames.push_back(make_info());
    rebuild_schedule(now_ms);
    if (schedule_) {
      alarm1_next_ = now_ms;  // grid index 0 fires at boot time
      a.alarm1_at = alarm1_next_;
    }
  }
  alarm2_next_ = now_ms + static_cast<int64_t>(listen_interval_min_) * 60000;
  a.alarm2_at = alarm2_next_;
  return a;
}

Actions Node::on_alarm1(int64_t now_ms, long gen) {
  if (gen != alarm1_gen_ || !schedule_ || !running_) return {};
  drain_to(now_ms);
  Actions a;
  if (mode_ != Mode::Sleeping) {
    // Missed grid point (long receive or reboot in progress): drop it and try
    // the next one.
    a.notes.push_back("alarm1 skipped mode=" + std::string(mode_name(mode_)));
    alarm1_next_ = advance_cursor();
    ++alarm1_gen_;
    a.alarm1_at = alarm1_next_;
    return a;
  }
  FirmwareId fired = schedule_->indices()[sched_pos_];
  a.frames.push_back(make_readings(now_ms, fired));
  alarm1_next_ = advance_cursor();
  ++alarm1_gen_;
  a.alarm1_at = alarm1_next_;
  return a;
}

Actions Node::on_alarm2(int64_t now_ms, long gen) {
  if (gen != alarm2_gen_) return {};
  drain_to(now_ms);
  Actions a;
  if (mode_ == Mode::Rebooting) return {};  // boot re-arms both alarms
  alarm2_next_ = now_ms + static_cast<int64_t>(listen_interval_min_) * 60000;
  ++alarm2_gen_;
  a.alarm2_at = alarm2_next_;
  if (mode_ == Mode::Listening) {
    a.notes.push_back("listen window skipped (still listening)");
    return a;
  }
  mode_ = Mode::Listening;
  window_close_at_ = now_ms + kListenWindowMs;
  a.window_close_at = window_close_at_;
  a.frames.push_back(proto::ListenFrame{});
  while (!inbox_.empty() && mode_ == Mode::Listening) {
    proto::Frame f = std::move(inbox_.front());
    inbox_.pop_front();
    merge(a, apply_frame(now_ms, f));
  }
  return a;
}

Actions Node::on_window_close(int64_t now_ms) {
  if (mode_ != Mode::Listening || now_ms != window_close_at_) return {};
  drain_to(now_ms);
  Actions a;
  if (transfer_active_) {
    a.notes.push_back("window held open for image transfer");
    return a;
  }
  mode_ = Mode::Sleeping;
  window_close_at_ = -1;
  return a;
}

Actions Node::on_pir(int64_t now_ms) {
  drain_to(now_ms);
  Actions a;
  if (mode_ != Mode::Sleeping || !running_ || !running_->has(AppKind::Presence)) {
    a.notes.push_back("pir ignored mode=" + std::string(mode_name(mode_)) +
                      " fw=" + (running_ ? std::to_string(running_->value()) : "none"));
    return a;
  }
  battery_mAh_ = std::max(0.0, battery_mAh_ - energy::pir_event_charge_mAh(*draws_));
  proto::SensorDataFrame data;
  data.readings[AppKind::Presence] = 1;
  data.battery_pct = battery_pct();
  a.frames.push_back(data);
  // Both alarms are re-armed at their existing times: detection does not move
  // the sensing grid or the listen cadence.
  if (alarm1_next_ >= 0 && schedule_) {
    ++alarm1_gen_;
    a.alarm1_at = alarm1_next_;
  }
  if (alarm2_next_ >= 0) {
    ++alarm2_gen_;
    a.alarm2_at = alarm2_next_;
  }
  return a;
}

Actions Node::on_frame(int64_t now_ms, const proto::Frame& frame) {
  drain_to(now_ms);
  if (mode_ != Mode::Listening) {
    Actions a;
    inbox_.push_back(frame);
    a.notes.push_back("frame held until next window tag=" +
                      std::string(proto::frame_tag(frame)));
    return a;
  }
  return apply_frame(now_ms, frame);
}

Actions Node::apply_frame(int64_t now_ms, const proto::Frame& frame) {
  Actions a;
  std::visit(
      overloaded(
          [&](const proto::FrameKindNotice& n) { announced_class_ = n.cls; },
          [&](const proto::ScheduleUpdateFrame& f) {
            announced_class_.reset();
            uint8_t wanted = f.schedule.all_bits();
            uint8_t have = running_ ? static_cast<uint8_t>(running_->mask() & 0x07) : 0;
            if ((wanted & ~have) != 0) {
              a.notes.push_back("schedule update rejected: apps not in running firmware");
              return;
            }
            schedule_ = f.schedule;
            sched_epoch_ms_ = now_ms;
            sched_pos_ = 0;
            for (AppKind k : proto::kAllApps)
              if (proto::is_periodic(k) && f.schedule.all_bits() & proto::app_bit(k))
                intervals_[k] = *f.schedule.interval_of(k);
            // Skip the index-0 event (we are mid-window); start at the next one.
            alarm1_next_ = advance_cursor();
            ++alarm1_gen_;
            a.alarm1_at = alarm1_next_;
            a.frames.push_back(proto::ProgOkFrame{});
          },
          [&](const proto::OtaSendFrame& f) {
            announced_class_.reset();
            if (transfer_active_) {
              a.notes.push_back("ota send ignored: transfer already active");
              return;
            }
            if (f.size_bytes == 0 || f.size_bytes > kSdImageMaxBytes) {
              a.notes.push_back("ota send rejected: image size out of range");
              return;
            }
            transfer_active_ = true;
            incoming_ = SdImage{f.firmware, static_cast<long>(f.size_bytes)};
            a.notes.push_back("image receive started fw=" + std::to_string(f.firmware.value()));
          },
          [&](const proto::OtaStartFrame& f) {
            announced_class_.reset();
            if (!sd_has(f.firmware)) throw UnknownFirmware(f.firmware.value());
            pending_restart_ = f.firmware;
            mode_ = Mode::Rebooting;
            window_close_at_ = -1;
            ++alarm1_gen_;
            ++alarm2_gen_;
            a.reboot_done_at = now_ms + kRebootLatencyMs;
            a.notes.push_back("restarting with fw=" + std::to_string(f.firmware.value()));
          },
          [&](const proto::OtaDeleteFrame& f) {
            announced_class_.reset();
            if (!sd_has(f.firmware)) throw UnknownFirmware(f.firmware.value());
            std::erase_if(sd_, [&](const SdImage& img) { return img.firmware == f.firmware; });
            if (running_ == f.firmware) {
              running_.reset();
              schedule_.reset();
              alarm1_next_ = -1;
              ++alarm1_gen_;
              a.notes.push_back("running firmware deleted; node idle");
            }
            a.frames.push_back(proto::ProgOkFrame{});
          },
          [&](const auto&) {
            announced_class_.reset();
            a.notes.push_back("unexpected frame ignored tag=" +
                              std::string(proto::frame_tag(frame)));
          }),
      frame);
  return a;
}

Actions Node::on_transfer_complete(int64_t now_ms) {
  if (!transfer_active_ || !incoming_) return {};
  drain_to(now_ms);
  Actions a;
  transfer_active_ = false;
  SdImage img = *incoming_;
  incoming_.reset();
  auto it = std::find_if(sd_.begin(), sd_.end(),
                         [&](const SdImage& s) { return s.firmware == img.firmware; });
  if (it != sd_.end()) {
    it->size_bytes = img.size_bytes;
  } else {
    if (sd_.size() >= sd_cap_) throw SdFull();
    sd_.push_back(img);
  }
  mode_ = Mode::Sleeping;
  window_close_at_ = -1;
  a.frames.push_back(proto::ProgOkFrame{});
  a.notes.push_back("image stored fw=" + std::to_string(img.firmware.value()));
  return a;
}

Actions Node::on_reboot_done(int64_t now_ms) {
  if (mode_ != Mode::Rebooting || !pending_restart_) return {};
  drain_to(now_ms);
  return boot(now_ms, *pending_restart_);
}

}  // namespace ssn::node
