#include "ssn/store.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssn/errors.hpp"
#include "ssn/netsim.hpp"

namespace fs = std::filesystem;

namespace ssn::store {

namespace {

constexpr const char* kRegisterFile = "register.tsv";
constexpr const char* kDevicesFile = "devices.tsv";
constexpr const char* kFirmwaresFile = "firmwares.tsv";
constexpr const char* kOtaFile = "otafirmwares.tsv";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename V>
std::string encode_kv(const std::map<AppKind, V>& m) {
  if (m.empty()) return "-";
  std::string out;
  for (const auto& [k, v] : m) {
    if (!out.empty()) out += ',';
    out += proto::app_tag(k);
    out += ':';
    out += std::to_string(v);
  }
  return out;
}

template <typename V>
std::map<AppKind, V> decode_kv(const std::string& s, const std::string& where) {
  std::map<AppKind, V> out;
  if (s == "-") return out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(where + ": bad key/value pair \"" + item + "\"");
    auto k = proto::app_from_tag(item.substr(0, colon));
    if (!k) throw Error(where + ": unknown application tag in \"" + item + "\"");
    out[*k] = static_cast<V>(std::stoll(item.substr(colon + 1)));
  }
  return out;
}

std::string encode_opt(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string("-");
}

}  // namespace

Store::Store(std::string data_dir) : dir_(std::move(data_dir)) {
  fs::create_directories(dir_);
  replay();
  if (firmwares_.empty()) seed_firmwares();
}

void Store::seed_firmwares() {
  net::LinkModel lm;
  for (int id = 1; id <= 15; ++id) {
    proto::FirmwareId fw(id);
    FirmwareRow row{id, fw.mask(), net::descriptor_for(fw, lm).size_bytes};
    firmwares_[id] = row;
    append(kFirmwaresFile, "put\t" + std::to_string(id) + "\t" + std::to_string(int(row.app_mask)) +
                               "\t" + std::to_string(row.image_size));
  }
}

void Store::append(const std::string& table, const std::string& line) {
  std::ofstream out(fs::path(dir_) / table, std::ios::app);
  if (!out) throw Error("cannot append to store table " + table);
  out << line << '\n';
}

void Store::replay() {
  auto each_line = [&](const char* table, auto&& fn) {
    std::ifstream in(fs::path(dir_) / table);
    if (!in) return;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        fn(split_tabs(line));
      } catch (const std::exception& e) {
        throw Error(std::string(table) + " line " + std::to_string(n) + ": " + e.what());
      }
    }
  };

  each_line(kFirmwaresFile, [&](const std::vector<std::string>& f) {
    if (f.size() != 4 || f[0] != "put") throw Error("bad firmware record");
    FirmwareRow row{std::stoi(f[1]), static_cast<uint8_t>(std::stoi(f[2])), std::stol(f[3])};
    firmwares_[row.firmware_id] = row;
  });

  each_line(kDevicesFile, [&](const std::vector<std::string>& f) {
    if (f[0] == "del") {
      if (f.size() != 2) throw Error("bad device delete");
      devices_.erase(std::stoi(f[1]));
      return;
    }
    if (f.size() != 6 || f[0] != "put") throw Error("bad device record");
    DeviceRow row;
    row.device_id = std::stoi(f[1]);
    row.battery_pct = std::stoi(f[2]);
    row.listen_interval_min = static_cast<uint32_t>(std::stoul(f[3]));
    row.sensing_intervals = decode_kv<uint32_t>(f[4], "device intervals");
    if (f[5] != "-") row.running_firmware = std::stoi(f[5]);
    devices_[row.device_id] = row;
  });

  each_line(kRegisterFile, [&](const std::vector<std::string>& f) {
    if (f.size() != 7 || f[0] != "put") throw Error("bad register record");
    RegisterRow row;
    row.id = std::stol(f[1]);
    row.device_id = std::stoi(f[2]);
    row.firmware_id = std::stoi(f[3]);
    row.timestamp_ms = std::stoll(f[4]);
    row.readings = decode_kv<int32_t>(f[5], "register readings");
    row.battery_pct = std::stoi(f[6]);
    registers_.push_back(row);
    next_register_id_ = std::max(next_register_id_, row.id + 1);
  });

  each_line(kOtaFile, [&](const std::vector<std::string>& f) {
    if (f[0] == "del") {
      if (f.size() != 2) throw Error("bad sd-entry delete");
      long id = std::stol(f[1]);
      std::erase_if(ota_rows_, [id](const OtaFirmwareRow& r) { return r.ota_id == id; });
      return;
    }
    if (f.size() != 4 || f[0] != "put") throw Error("bad sd-entry record");
    OtaFirmwareRow row{std::stol(f[1]), std::stoi(f[2]), std::stoi(f[3])};
    ota_rows_.push_back(row);
    next_ota_id_ = std::max(next_ota_id_, row.ota_id + 1);
  });
}

void Store::check_device_fk(int device_id, const char* op) const {
  if (!devices_.count(device_id))
    throw ForeignKeyViolation(std::string(op) + ": unknown device " + std::to_string(device_id));
}

void Store::check_firmware_fk(int firmware_id, const char* op) const {
  if (!firmwares_.count(firmware_id))
    throw ForeignKeyViolation(std::string(op) + ": unknown firmware " +
                              std::to_string(firmware_id));
}

long Store::insert_register(int device_id, int firmware_id, int64_t timestamp_ms,
                            const std::map<AppKind, int32_t>& readings, int battery_pct) {
  check_device_fk(device_id, "insert_register");
  check_firmware_fk(firmware_id, "insert_register");
  RegisterRow row{next_register_id_++, device_id, firmware_id, timestamp_ms, readings,
                  battery_pct};
  registers_.push_back(row);
  append(kRegisterFile, "put\t" + std::to_string(row.id) + "\t" + std::to_string(device_id) +
                            "\t" + std::to_string(firmware_id) + "\t" +
                            std::to_string(timestamp_ms) + "\t" + encode_kv(readings) + "\t" +
                            std::to_string(battery_pct));
  return row.id;
}

void Store::upsert_device(const DeviceRow& row) {
  if (row.running_firmware) check_firmware_fk(*row.running_firmware, "upsert_device");
  devices_[row.device_id] = row;
  append(kDevicesFile, "put\t" + std::to_string(row.device_id) + "\t" +
                           std::to_string(row.battery_pct) + "\t" +
                           std::to_string(row.listen_interval_min) + "\t" +
                           encode_kv(row.sensing_intervals) + "\t" +
                           encode_opt(row.running_firmware));
}

void Store::add_sd_entry(int device_id, int firmware_id) {
  check_device_fk(device_id, "add_sd_entry");
  check_firmware_fk(firmware_id, "add_sd_entry");
  for (const OtaFirmwareRow& r : ota_rows_)
    if (r.device_id == device_id && r.firmware_id == firmware_id)
      throw DuplicateSdEntry(device_id, firmware_id);
  OtaFirmwareRow row{next_ota_id_++, device_id, firmware_id};
  ota_rows_.push_back(row);
  append(kOtaFile, "put\t" + std::to_string(row.ota_id) + "\t" + std::to_string(device_id) +
                       "\t" + std::to_string(firmware_id));
}

bool Store::remove_sd_entry(int device_id, int firmware_id) {
  for (auto it = ota_rows_.begin(); it != ota_rows_.end(); ++it) {
    if (it->device_id == device_id && it->firmware_id == firmware_id) {
      append(kOtaFile, "del\t" + std::to_string(it->ota_id));
      ota_rows_.erase(it);
      return true;
    }
  }
  return false;
}

void Store::record_sd_contents(int device_id, const std::set<int>& firmware_ids) {
  check_device_fk(device_id, "record_sd_contents");
  std::set<int> current;
  for (const OtaFirmwareRow& r : ota_rows_)
    if (r.device_id == device_id) current.insert(r.firmware_id);
  for (int fw : current)
    if (!firmware_ids.count(fw)) remove_sd_entry(device_id, fw);
  for (int fw : firmware_ids)
    if (!current.count(fw)) add_sd_entry(device_id, fw);
}

std::vector<RegisterRow> Store::registers_by_device(int device_id) const {
  std::vector<RegisterRow> out;
  for (const RegisterRow& r : registers_)
    if (r.device_id == device_id) out.push_back(r);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
  return out;
}

std::vector<RegisterRow> Store::registers_by_app(AppKind kind) const {
  std::vector<RegisterRow> out;
  for (const RegisterRow& r : registers_)
    if (r.readings.count(kind)) out.push_back(r);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
  return out;
}

std::vector<RegisterRow> Store::registers_in_range(int64_t t0_ms, int64_t t1_ms) const {
  std::vector<RegisterRow> out;
  for (const RegisterRow& r : registers_)
    if (r.timestamp_ms >= t0_ms && r.timestamp_ms <= t1_ms) out.push_back(r);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
  return out;
}

std::optional<DeviceRow> Store::device(int device_id) const {
  auto it = devices_.find(device_id);
  if (it == devices_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Store::sd_contents(int device_id) const {
  std::vector<int> out;
  for (const OtaFirmwareRow& r : ota_rows_)
    if (r.device_id == device_id) out.push_back(r.firmware_id);
  std::sort(out.begin(), out.end());
  return out;
}

void Store::validate() const {
  long prev_id = 0;
  for (const RegisterRow& r : registers_) {
    if (r.id <= prev_id) throw ForeignKeyViolation("register ids not strictly increasing");
    prev_id = r.id;
    if (!devices_.count(r.device_id))
      throw ForeignKeyViolation("register " + std::to_string(r.id) + " references device " +
                                std::to_string(r.device_id));
    if (!firmwares_.count(r.firmware_id))
      throw ForeignKeyViolation("register " + std::to_string(r.id) + " references firmware " +
                                std::to_string(r.firmware_id));
  }
  std::set<std::pair<int, int>> seen;
  for (const OtaFirmwareRow& r : ota_rows_) {
    if (!devices_.count(r.device_id))
      throw ForeignKeyViolation("sd entry " + std::to_string(r.ota_id) + " references device " +
                                std::to_string(r.device_id));
    if (!firmwares_.count(r.firmware_id))
      throw ForeignKeyViolation("sd entry " + std::to_string(r.ota_id) + " references firmware " +
                                std::to_string(r.firmware_id));
    if (!seen.insert({r.device_id, r.firmware_id}).second)
      throw ForeignKeyViolation("duplicate sd entry for device " + std::to_string(r.device_id) +
                                " firmware " + std::to_string(r.firmware_id));
  }
  for (const auto& [id, dev] : devices_)
    if (dev.running_firmware && !firmwares_.count(*dev.running_firmware))
      throw ForeignKeyViolation("device " + std::to_string(id) + " runs unknown firmware");
}

void Store::compact() {
  auto rewrite = [&](const char* table, auto&& fn) {
    fs::path tmp = fs::path(dir_) / (std::string(table) + ".tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error("cannot compact store table " + std::string(table));
      fn(out);
    }
    fs::rename(tmp, fs::path(dir_) / table);
  };

  rewrite(kFirmwaresFile, [&](std::ofstream& out) {
    for (const auto& [id, row] : firmwares_)
      out << "put\t" << id << '\t' << int(row.app_mask) << '\t' << row.image_size << '\n';
  });
  rewrite(kDevicesFile, [&](std::ofstream& out) {
    for (const auto& [id, row] : devices_)
      out << "put\t" << id << '\t' << row.battery_pct << '\t' << row.listen_interval_min << '\t'
          << encode_kv(row.sensing_intervals) << '\t' << encode_opt(row.running_firmware) << '\n';
  });
  rewrite(kRegisterFile, [&](std::ofstream& out) {
    for (const RegisterRow& r : registers_)
      out << "put\t" << r.id << '\t' << r.device_id << '\t' << r.firmware_id << '\t'
          << r.timestamp_ms << '\t' << encode_kv(r.readings) << '\t' << r.battery_pct << '\n';
  });
  rewrite(kOtaFile, [&](std::ofstream& out) {
    for (const OtaFirmwareRow& r : ota_rows_)
      out << "put\t" << r.ota_id << '\t' << r.device_id << '\t' << r.firmware_id << '\n';
  });
}

}  // namespace ssn::store
