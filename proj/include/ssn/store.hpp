#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ssn/proto.hpp"

// File-backed tables behind the controller: Register (everything the
// controller hears), Devices, Firmwares and OTAFirmwares (per-device SD card
// contents). Each table is an append-only op log of put/del lines; reload
// replays the log, compact() rewrites it with live rows only.
namespace ssn::store {

using proto::AppKind;

struct RegisterRow {
  long id = 0;  // strictly increasing, assigned by the store
  int device_id = 0;
  int firmware_id = 0;
  int64_t timestamp_ms = 0;
  std::map<AppKind, int32_t> readings;
  int battery_pct = 100;
};

struct DeviceRow {
  int device_id = 0;
  int battery_pct = 100;
  uint32_t listen_interval_min = 1;
  std::map<AppKind, uint32_t> sensing_intervals;
  std::optional<int> running_firmware;
};

struct FirmwareRow {
  int firmware_id = 0;
  uint8_t app_mask = 0;
  long image_size = 0;
};

struct OtaFirmwareRow {
  long ota_id = 0;
  int device_id = 0;
  int firmware_id = 0;
};

class Store {
 public:
  // Opens (and creates if needed) the four table files under data_dir and
  // replays them. The 15 firmware rows are seeded on first open.
  explicit Store(std::string data_dir);

  long insert_register(int device_id, int firmware_id, int64_t timestamp_ms,
                       const std::map<AppKind, int32_t>& readings, int battery_pct);
  void upsert_device(const DeviceRow& row);
  void add_sd_entry(int device_id, int firmware_id);     // throws DuplicateSdEntry
  bool remove_sd_entry(int device_id, int firmware_id);  // false when absent
  // Replaces a device's recorded SD contents wholesale.
  void record_sd_contents(int device_id, const std::set<int>& firmware_ids);

  const std::vector<RegisterRow>& registers() const { return registers_; }
  std::vector<RegisterRow> registers_by_device(int device_id) const;
  std::vector<RegisterRow> registers_by_app(AppKind kind) const;
  std::vector<RegisterRow> registers_in_range(int64_t t0_ms, int64_t t1_ms) const;

  const std::map<int, DeviceRow>& devices() const { return devices_; }
  std::optional<DeviceRow> device(int device_id) const;
  const std::map<int, FirmwareRow>& firmwares() const { return firmwares_; }
  std::vector<int> sd_contents(int device_id) const;  // ascending firmware ids

  // Full-scan referential integrity check; throws ForeignKeyViolation.
  void validate() const;
  // Rewrites every table file with only the live rows.
  void compact();

  const std::string& data_dir() const { return dir_; }

 private:
  void replay();
  void seed_firmwares();
  void append(const std::string& table, const std::string& line);
  void check_device_fk(int device_id, const char* op) const;
  void check_firmware_fk(int firmware_id, const char* op) const;

  std::string dir_;
  std::vector<RegisterRow> registers_;
  std::map<int, DeviceRow> devices_;
  std::map<int, FirmwareRow> firmwares_;
  std::vector<OtaFirmwareRow> ota_rows_;  // live rows, insertion order
  long next_register_id_ = 1;
  long next_ota_id_ = 1;
};

}  // namespace ssn::store
