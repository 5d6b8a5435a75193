#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssn/energy.hpp"
#include "ssn/netsim.hpp"
#include "ssn/proto.hpp"

// Per-node firmware state machine: sleep, the alarm1 sensing grid, the alarm2
// listen window, PIR interrupts, OTA image handling and restart. Handlers are
// pure transitions returning the frames/timers for the simulator to act on, so
// the class is unit-testable without an event loop.
namespace ssn::node {

using proto::AppKind;
using proto::FirmwareId;

enum class Mode { Sleeping, Sensing, Listening, Rebooting };

std::string_view mode_name(Mode m);

struct SdImage {
  FirmwareId firmware;
  long size_bytes;
};

inline constexpr long kSdImageMaxBytes = 131072;  // flash page limit per image
inline constexpr std::size_t kSdDefaultCapImages = 16000;
inline constexpr int64_t kListenWindowMs = 1000;
inline constexpr int64_t kRebootLatencyMs = 2000;
inline constexpr uint32_t kDefaultIntervalS = 60;  // for apps with no remembered interval

// What a handler wants the simulator to do next. Alarm times come with the
// node's current generation; events carrying an older generation are stale.
struct Actions {
  std::vector<proto::Frame> frames;
  std::optional<int64_t> alarm1_at;
  std::optional<int64_t> alarm2_at;
  std::optional<int64_t> window_close_at;
  std::optional<int64_t> reboot_done_at;
  std::vector<std::string> notes;  // surfaced as NOTE log lines
};

class Node {
 public:
  Node(int id, net::NodeRole role, const energy::CurrentDraws* draws,
       std::size_t sd_cap_images = kSdDefaultCapImages);

  int id() const { return id_; }
  net::NodeRole role() const { return role_; }
  Mode mode() const { return mode_; }
  bool is_listening() const { return mode_ == Mode::Listening; }
  std::optional<FirmwareId> running() const { return running_; }
  const std::vector<SdImage>& sd_store() const { return sd_; }
  bool sd_has(FirmwareId fw) const;
  uint32_t listen_interval_min() const { return listen_interval_min_; }
  const std::map<AppKind, uint32_t>& intervals() const { return intervals_; }
  const std::optional<proto::Schedule>& schedule() const { return schedule_; }

  long alarm1_gen() const { return alarm1_gen_; }
  long alarm2_gen() const { return alarm2_gen_; }

  double battery_mAh() const { return battery_mAh_; }
  int battery_pct() const;
  void set_battery_pct(int pct);
  // Integrates consumption up to now at the mode-appropriate rate.
  void drain_to(int64_t now_ms);

  // Joins the network: optionally installs and boots an initial image, sends
  // the hello frame and programs both alarms. Sensing starts immediately.
  Actions provision(int64_t now_ms, std::optional<SdImage> initial,
                    const std::map<AppKind, uint32_t>& intervals, uint32_t listen_min = 1);

  Actions on_alarm1(int64_t now_ms, long gen);
  Actions on_alarm2(int64_t now_ms, long gen);
  Actions on_window_close(int64_t now_ms);
  Actions on_pir(int64_t now_ms);
  Actions on_frame(int64_t now_ms, const proto::Frame& frame);
  // Image fully received: writes it to SD and acknowledges.
  Actions on_transfer_complete(int64_t now_ms);  // throws SdFull
  Actions on_reboot_done(int64_t now_ms);

  bool transfer_active() const { return transfer_active_; }

 private:
  Actions boot(int64_t now_ms, std::optional<FirmwareId> fw);
  Actions apply_frame(int64_t now_ms, const proto::Frame& frame);
  proto::InfoFrame make_info() const;
  proto::SensorDataFrame make_readings(int64_t now_ms, FirmwareId fired) const;
  void rebuild_schedule(int64_t epoch_ms);
  int64_t advance_cursor();  // consumes the current grid event, returns the next one's time
  double current_rate_mA() const;
  energy::NodeEnergyConfig energy_config() const;

  int id_;
  net::NodeRole role_;
  const energy::CurrentDraws* draws_;
  std::size_t sd_cap_;

  Mode mode_ = Mode::Sleeping;
  std::optional<FirmwareId> running_;
  std::vector<SdImage> sd_;
  std::map<AppKind, uint32_t> intervals_;  // remembered per-kind settings
  uint32_t listen_interval_min_ = 1;

  std::optional<proto::Schedule> schedule_;
  int64_t sched_epoch_ms_ = 0;
  std::size_t sched_pos_ = 0;

  long alarm1_gen_ = 0;
  long alarm2_gen_ = 0;
  int64_t alarm1_next_ = -1;
  int64_t alarm2_next_ = -1;
  int64_t window_close_at_ = -1;

  bool transfer_active_ = false;
  std::optional<SdImage> incoming_;
  std::optional<FirmwareId> pending_restart_;
  std::optional<proto::FrameClass> announced_class_;
  std::deque<proto::Frame> inbox_;  // frames that arrived outside a window

  double capacity_mAh_ = 6600.0;
  double battery_mAh_ = 6600.0;
  int64_t drained_to_ms_ = 0;
};

// Deterministic synthetic reading for an application at a given time.
int32_t reading_value(AppKind kind, int64_t t_ms);

}  // namespace ssn::node
