#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ssn/errors.hpp"

// Wire protocol between sensor nodes and the central controller: firmware
// codification, merged sensing schedules and the textual frame codecs.
namespace ssn::proto {

// The four deployable applications. Presence is event driven; the other three
// sense periodically at a configurable interval.
enum class AppKind : uint8_t { Temperature = 0, Humidity = 1, Luminosity = 2, Presence = 3 };

inline constexpr std::array<AppKind, 4> kAllApps = {AppKind::Temperature, AppKind::Humidity,
                                                    AppKind::Luminosity, AppKind::Presence};

constexpr uint8_t app_bit(AppKind k) { return static_cast<uint8_t>(1u << static_cast<uint8_t>(k)); }

constexpr bool is_periodic(AppKind k) { return k != AppKind::Presence; }

// Short sensor tag used on the wire ("TEMP", "HUM", "LDR", "PIR").
std::string_view app_tag(AppKind k);
// Long name used in scenario files and reports ("temperature", ...).
std::string_view app_name(AppKind k);
std::optional<AppKind> app_from_tag(std::string_view tag);
std::optional<AppKind> app_from_name(std::string_view name);

// Firmware identifier 1..15: the bitmask of the application subset baked into
// the image (bit 0 Temperature, bit 1 Humidity, bit 2 Luminosity, bit 3 Presence).
class FirmwareId {
 public:
  explicit FirmwareId(int id) : id_(static_cast<uint8_t>(id)) {
    if (id < 1 || id > 15) throw InvalidFirmwareId(id);
  }
  int value() const { return id_; }
  uint8_t mask() const { return id_; }
  bool has(AppKind k) const { return (id_ & app_bit(k)) != 0; }
  bool has_periodic_app() const { return (id_ & 0x07) != 0; }
  auto operator<=>(const FirmwareId&) const = default;

 private:
  uint8_t id_;
};

FirmwareId firmware_of(const std::set<AppKind>& apps);
std::set<AppKind> apps_of(FirmwareId fw);

// One application instance as requested by a provider. Presence carries no
// sensing interval.
struct AppConfig {
  AppKind kind;
  std::optional<uint32_t> sensing_interval_s;
  bool operator==(const AppConfig&) const = default;
};

// Merged per-node sensing timetable: gaps between consecutive sensing events
// plus, at each event, the bitmask of applications that fire. The pattern
// repeats every hyperperiod; indices.front() == indices.back() carries all
// application bits because every progression starts at t = 0.
class Schedule {
 public:
  static constexpr uint32_t kMaxIntervalS = 86400;
  static constexpr uint64_t kMaxHyperperiodS = 10'000'000;

  Schedule(std::vector<uint32_t> intervals, std::vector<FirmwareId> indices);

  const std::vector<uint32_t>& intervals() const { return intervals_; }
  const std::vector<FirmwareId>& indices() const { return indices_; }
  uint64_t hyperperiod_s() const { return hyperperiod_; }
  // OR of the bits of every participating application.
  uint8_t all_bits() const { return indices_.front().mask(); }
  std::size_t event_count() const { return intervals_.size(); }

  // Event offset (seconds from the schedule epoch) of event k in [0, event_count).
  uint64_t offset_of(std::size_t k) const;

  // Sensing interval of one application, recovered as the gap to its first
  // repeat. For a kind served by several merged progressions this is the
  // smallest gap.
  std::optional<uint32_t> interval_of(AppKind k) const;

  bool operator==(const Schedule& other) const {
    return intervals_ == other.intervals_ && indices_ == other.indices_;
  }

 private:
  std::vector<uint32_t> intervals_;
  std::vector<FirmwareId> indices_;
  uint64_t hyperperiod_ = 0;
};

// Builds the merged schedule from the union of the arithmetic progressions
// {0, i, 2i, ...} of every periodic config, over one hyperperiod.
Schedule build_schedule(const std::vector<AppConfig>& configs);

// --- wire frames ---

struct InfoFrame {
  FirmwareId firmware;
  std::map<AppKind, uint32_t> sensor_intervals;  // periodic apps only
  uint32_t listen_interval_min = 1;
  bool operator==(const InfoFrame&) const = default;
};

struct SensorDataFrame {
  std::map<AppKind, int32_t> readings;  // exactly the apps that fired
  int battery_pct = 100;                // 0..100
  bool operator==(const SensorDataFrame&) const = default;
};

struct ListenFrame {
  bool operator==(const ListenFrame&) const = default;
};

struct ProgOkFrame {
  bool operator==(const ProgOkFrame&) const = default;
};

struct ScheduleUpdateFrame {
  Schedule schedule;
  bool operator==(const ScheduleUpdateFrame&) const = default;
};

struct OtaSendFrame {
  FirmwareId firmware;
  uint32_t size_bytes = 0;
  bool operator==(const OtaSendFrame&) const = default;
};

struct OtaStartFrame {
  FirmwareId firmware;
  bool operator==(const OtaStartFrame&) const = default;
};

struct OtaDeleteFrame {
  FirmwareId firmware;
  bool operator==(const OtaDeleteFrame&) const = default;
};

enum class FrameClass : uint8_t { Standard, Ota };

// Heads-up sent by the controller before each payload so the node can select
// the standard or OTA reception path.
struct FrameKindNotice {
  FrameClass cls = FrameClass::Standard;
  bool operator==(const FrameKindNotice&) const = default;
};

using Frame = std::variant<InfoFrame, SensorDataFrame, ListenFrame, ProgOkFrame,
                           ScheduleUpdateFrame, OtaSendFrame, OtaStartFrame, OtaDeleteFrame,
                           FrameKindNotice>;

std::string encode_frame(const Frame& f);
Frame decode_frame(std::string_view bytes);

// Short tag for event logs ("INFO", "DATA", "LISTEN", ...).
std::string_view frame_tag(const Frame& f);

// PHY-level sizes. The three measured anchors (data frame, link ACK, #LISTEN)
// are exact; every other frame is its encoded length plus a fixed overhead.
inline constexpr int kDataFramePhyBytes = 102;
inline constexpr int kLinkAckPhyBytes = 49;
inline constexpr int kListenPhyBytes = 87;
inline constexpr int kPhyOverheadBytes = 21;
inline constexpr int kExtraReadingPhyBytes = 10;

int phy_size(const Frame& f);

}  // namespace ssn::proto
