#include "ssn/proto.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace ssn::proto {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string_view app_tag(AppKind k) {
  switch (k) {
    case AppKind::Temperature: return "TEMP";
    case AppKind::Humidity: return "HUM";
    case AppKind::Luminosity: return "LDR";
    case AppKind::Presence: return "PIR";
  }
  return "?";
}

std::string_view app_name(AppKind k) {
  switch (k) {
    case AppKind::Temperature: return "temperature";
    case AppKind::Humidity: return "humidity";
    case AppKind::Luminosity: return "luminosity";
    case AppKind::Presence: return "presence";
  }
  return "?";
}

std::optional<AppKind> app_from_tag(std::string_view tag) {
  for (AppKind k : kAllApps)
    if (tag == app_tag(k)) return k;
  return std::nullopt;
}

std::optional<AppKind> app_from_name(std::string_view name) {
  for (AppKind k : kAllApps)
    if (name == app_name(k)) return k;
  return std::nullopt;
}

FirmwareId firmware_of(const std::set<AppKind>& apps) {
  if (apps.empty()) throw EmptyAppSet();
  int mask = 0;
  for (AppKind k : apps) mask |= app_bit(k);
  return FirmwareId(mask);
}

std::set<AppKind> apps_of(FirmwareId fw) {
  std::set<AppKind> out;
  for (AppKind k : kAllApps)
    if (fw.has(k)) out.insert(k);
  return out;
}

// --- Schedule ---

Schedule::Schedule(std::vector<uint32_t> intervals, std::vector<FirmwareId> indices)
    : intervals_(std::move(intervals)), indices_(std::move(indices)) {
  if (intervals_.empty()) throw InvalidSchedule("no intervals");
  if (indices_.size() != intervals_.size() + 1)
    throw InvalidSchedule("index count must be interval count + 1");
  for (uint32_t i : intervals_) {
    if (i < 1 || i > kMaxIntervalS) throw InvalidSchedule("interval out of range");
    hyperperiod_ += i;
  }
  if (hyperperiod_ > kMaxHyperperiodS) throw InvalidSchedule("hyperperiod exceeds cap");
  uint8_t all = 0;
  for (const FirmwareId& x : indices_) all = static_cast<uint8_t>(all | x.mask());
  if ((all & app_bit(AppKind::Presence)) != 0)
    throw InvalidSchedule("presence is event driven and never scheduled");
  if (indices_.front() != indices_.back() || indices_.front().mask() != all)
    throw InvalidSchedule("first and last index must carry all application bits");
}

uint64_t Schedule::offset_of(std::size_t k) const {
  uint64_t t = 0;
  for (std::size_t j = 0; j < k && j < intervals_.size(); ++j) t += intervals_[j];
  return t;
}

std::optional<uint32_t> Schedule::interval_of(AppKind k) const {
  if ((all_bits() & app_bit(k)) == 0) return std::nullopt;
  uint64_t t = 0;
  for (std::size_t j = 0; j < intervals_.size(); ++j) {
    t += intervals_[j];
    if (indices_[j + 1].has(k)) return static_cast<uint32_t>(t);
  }
  return std::nullopt;  // unreachable for a valid schedule
}

Schedule build_schedule(const std::vector<AppConfig>& configs) {
  std::vector<std::pair<uint32_t, uint8_t>> progressions;  // (interval, bit)
  for (const AppConfig& c : configs) {
    if (!is_periodic(c.kind)) continue;  // presence works by events
    if (!c.sensing_interval_s || *c.sensing_interval_s < 1)
      throw Error("periodic application requires a sensing interval >= 1 s");
    if (*c.sensing_interval_s > Schedule::kMaxIntervalS)
      throw ScheduleTooLarge("interval above " + std::to_string(Schedule::kMaxIntervalS) + " s");
    progressions.emplace_back(*c.sensing_interval_s, app_bit(c.kind));
  }
  if (progressions.empty()) throw NoPeriodicApps();

  uint64_t hyper = 1;
  for (const auto& [interval, bit] : progressions) {
    hyper = std::lcm(hyper, static_cast<uint64_t>(interval));
    if (hyper > Schedule::kMaxHyperperiodS) throw ScheduleTooLarge("hyperperiod exceeds cap");
  }

  // Union of all progressions over one hyperperiod, endpoints included.
  std::vector<uint64_t> times;
  for (const auto& [interval, bit] : progressions) {
    std::size_t count = static_cast<std::size_t>(hyper / interval) + 1;
    if (times.size() + count > 2'000'000) throw ScheduleTooLarge("too many sensing events");
    for (uint64_t t = 0; t <= hyper; t += interval) times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  std::vector<FirmwareId> indices;
  indices.reserve(times.size());
  for (uint64_t t : times) {
    int mask = 0;
    for (const auto& [interval, bit] : progressions)
      if (t % interval == 0) mask |= bit;
    indices.push_back(FirmwareId(mask));
  }
  std::vector<uint32_t> intervals;
  intervals.reserve(times.size() - 1);
  for (std::size_t j = 1; j < times.size(); ++j)
    intervals.push_back(static_cast<uint32_t>(times[j] - times[j - 1]));

  return Schedule(std::move(intervals), std::move(indices));
}

// --- encoding ---

namespace {

void append_field(std::string& out, std::string_view tag, uint64_t value) {
  out += '#';
  out += tag;
  out += ':';
  out += std::to_string(value);
}

std::string encode_info(const InfoFrame& f) {
  std::set<AppKind> expected;
  for (AppKind k : kAllApps)
    if (is_periodic(k) && f.firmware.has(k)) expected.insert(k);
  std::set<AppKind> got;
  for (const auto& [k, v] : f.sensor_intervals) got.insert(k);
  if (got != expected)
    throw InvalidFrame("INFO sensor intervals must cover exactly the firmware's periodic apps");
  for (const auto& [k, v] : f.sensor_intervals)
    if (v < 1) throw InvalidFrame("sensing interval must be >= 1 s");
  if (f.listen_interval_min < 1) throw InvalidFrame("listen interval must be >= 1 min");

  std::string out = "#INFO";
  append_field(out, "APP", static_cast<uint64_t>(f.firmware.value()));
  for (const auto& [k, v] : f.sensor_intervals) append_field(out, app_tag(k), v);
  append_field(out, "LSTN", f.listen_interval_min);
  return out;
}

std::string encode_data(const SensorDataFrame& f) {
  if (f.readings.empty()) throw InvalidFrame("sensor data frame without readings");
  if (f.battery_pct < 0 || f.battery_pct > 100) throw InvalidFrame("battery percent out of range");
  std::string out = "#DATA";
  for (const auto& [k, v] : f.readings) {
    out += '#';
    out += app_tag(k);
    out += ':';
    out += std::to_string(v);
  }
  append_field(out, "BAT", static_cast<uint64_t>(f.battery_pct));
  return out;
}

std::string encode_schedule(const Schedule& s) {
  std::string out = "2|";
  for (uint32_t i : s.intervals()) {
    out += '<';
    out += std::to_string(i);
    out += '>';
  }
  out += "|-|";
  for (const FirmwareId& x : s.indices()) {
    out += '<';
    out += std::to_string(x.value());
    out += '>';
  }
  out += '|';
  return out;
}

}  // namespace

std::string encode_frame(const Frame& f) {
  return std::visit(
      Overloaded{
          [](const InfoFrame& fr) { return encode_info(fr); },
          [](const SensorDataFrame& fr) { return encode_data(fr); },
          [](const ListenFrame&) { return std::string("#LISTEN"); },
          [](const ProgOkFrame&) { return std::string("#PROGOK"); },
          [](const ScheduleUpdateFrame& fr) { return encode_schedule(fr.schedule); },
          [](const OtaSendFrame& fr) {
            if (fr.size_bytes < 1) throw InvalidFrame("OTA image size must be positive");
            std::string out = "#OTA#-send";
            append_field(out, "FW", static_cast<uint64_t>(fr.firmware.value()));
            append_field(out, "SIZE", fr.size_bytes);
            return out;
          },
          [](const OtaStartFrame& fr) {
            std::string out = "#OTA#-start_new_program";
            append_field(out, "FW", static_cast<uint64_t>(fr.firmware.value()));
            return out;
          },
          [](const OtaDeleteFrame& fr) {
            std::string out = "#OTA#-delete_program";
            append_field(out, "FW", static_cast<uint64_t>(fr.firmware.value()));
            return out;
          },
          [](const FrameKindNotice& fr) {
            return std::string(fr.cls == FrameClass::Standard ? "#KIND:STD" : "#KIND:OTA");
          },
      },
      f);
}

// --- decoding ---

namespace {

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;

  bool done() const { return pos >= s.size(); }

  char peek() const { return done() ? '\0' : s[pos]; }

  void expect(char c, const char* what) {
    if (done() || s[pos] != c)
      throw MalformedFrame(pos, std::string("expected '") + c + "' " + what);
    ++pos;
  }

  void expect_lit(std::string_view lit, const char* what) {
    if (s.substr(pos, lit.size()) != lit)
      throw MalformedFrame(pos, std::string("expected \"") + std::string(lit) + "\" " + what);
    pos += lit.size();
  }

  std::string_view take_until(char delim) {
    std::size_t start = pos;
    while (!done() && s[pos] != delim) ++pos;
    return s.substr(start, pos - start);
  }

  uint64_t number(uint64_t lo, uint64_t hi, const char* what) {
    std::size_t start = pos;
    if (done() || std::isdigit(static_cast<unsigned char>(s[pos])) == 0)
      throw MalformedFrame(pos, std::string(what) + ": expected a digit");
    uint64_t v = 0;
    while (!done() && std::isdigit(static_cast<unsigned char>(s[pos])) != 0) {
      v = v * 10 + static_cast<uint64_t>(s[pos] - '0');
      if (v > hi) throw MalformedFrame(start, std::string(what) + ": value out of range");
      ++pos;
    }
    if (v < lo) throw MalformedFrame(start, std::string(what) + ": value out of range");
    return v;
  }

  int32_t reading_value() {
    std::size_t start = pos;
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      ++pos;
    }
    uint64_t mag = number(0, 2147483647, "sensor reading");
    (void)start;
    return neg ? -static_cast<int32_t>(mag) : static_cast<int32_t>(mag);
  }

  void require_done() {
    if (!done()) throw MalformedFrame(pos, "trailing bytes after frame");
  }
};

Frame decode_info(Cursor& c) {
  c.expect('#', "before APP field");
  c.expect_lit("APP:", "as first INFO field");
  FirmwareId fw(static_cast<int>(c.number(1, 15, "firmware id")));
  std::map<AppKind, uint32_t> intervals;
  for (AppKind k : {AppKind::Temperature, AppKind::Humidity, AppKind::Luminosity}) {
    if (!fw.has(k)) continue;
    c.expect('#', "before sensor interval field");
    c.expect_lit(app_tag(k), "sensor field in codification order");
    c.expect(':', "after sensor tag");
    intervals[k] = static_cast<uint32_t>(c.number(1, Schedule::kMaxIntervalS, "sensing interval"));
  }
  c.expect('#', "before LSTN field");
  c.expect_lit("LSTN:", "as final INFO field");
  auto listen = static_cast<uint32_t>(c.number(1, 1'000'000, "listen interval"));
  c.require_done();
  return InfoFrame{fw, std::move(intervals), listen};
}

Frame decode_data(Cursor& c) {
  std::map<AppKind, int32_t> readings;
  int last_bit = 0;
  for (;;) {
    c.expect('#', "before data field");
    std::size_t tag_pos = c.pos;
    std::string_view tag = c.take_until(':');
    c.expect(':', "after data field tag");
    if (tag == "BAT") {
      int battery = static_cast<int>(c.number(0, 100, "battery percent"));
      c.require_done();
      if (readings.empty()) throw MalformedFrame(tag_pos, "data frame without readings");
      return SensorDataFrame{std::move(readings), battery};
    }
    auto kind = app_from_tag(tag);
    if (!kind) throw MalformedFrame(tag_pos, "unknown sensor tag \"" + std::string(tag) + "\"");
    if (app_bit(*kind) <= last_bit)
      throw MalformedFrame(tag_pos, "sensor readings out of codification order");
    last_bit = app_bit(*kind);
    readings[*kind] = c.reading_value();
  }
}

Frame decode_schedule(Cursor& c) {
  c.expect_lit("2|", "schedule frame prefix");
  std::vector<uint32_t> intervals;
  while (c.peek() == '<') {
    c.expect('<', "");
    intervals.push_back(
        static_cast<uint32_t>(c.number(1, Schedule::kMaxIntervalS, "schedule interval")));
    c.expect('>', "after schedule interval");
  }
  c.expect('|', "after intervals");
  c.expect('-', "between intervals and indices");
  c.expect('|', "before indices");
  std::vector<FirmwareId> indices;
  while (c.peek() == '<') {
    c.expect('<', "");
    indices.push_back(FirmwareId(static_cast<int>(c.number(1, 15, "schedule index"))));
    c.expect('>', "after schedule index");
  }
  c.expect('|', "after indices");
  c.require_done();
  try {
    return ScheduleUpdateFrame{Schedule(std::move(intervals), std::move(indices))};
  } catch (const Error& e) {
    throw MalformedFrame(0, e.what());
  }
}

Frame decode_ota(Cursor& c) {
  c.expect('#', "before OTA command");
  std::size_t cmd_pos = c.pos;
  std::string_view cmd = c.take_until('#');
  if (cmd == "-send") {
    c.expect('#', "before FW field");
    c.expect_lit("FW:", "");
    FirmwareId fw(static_cast<int>(c.number(1, 15, "firmware id")));
    c.expect('#', "before SIZE field");
    c.expect_lit("SIZE:", "");
    auto size = static_cast<uint32_t>(c.number(1, 1u << 30, "image size"));
    c.require_done();
    return OtaSendFrame{fw, size};
  }
  if (cmd == "-start_new_program" || cmd == "-delete_program") {
    c.expect('#', "before FW field");
    c.expect_lit("FW:", "");
    FirmwareId fw(static_cast<int>(c.number(1, 15, "firmware id")));
    c.require_done();
    if (cmd == "-start_new_program") return OtaStartFrame{fw};
    return OtaDeleteFrame{fw};
  }
  throw MalformedFrame(cmd_pos, "unknown OTA command \"" + std::string(cmd) + "\"");
}

}  // namespace

Frame decode_frame(std::string_view bytes) {
  if (bytes.empty()) throw MalformedFrame(0, "empty input");
  Cursor c{bytes};
  if (bytes[0] == '2') {
    return decode_schedule(c);
  }
  c.expect('#', "at frame start");
  std::size_t tag_pos = c.pos;
  std::string_view tag = c.take_until('#');
  // KIND carries its value after a colon rather than a '#'.
  if (tag.substr(0, 5) == "KIND:") {
    std::string_view v = tag.substr(5);
    if (v == "STD") {
      c.require_done();
      return FrameKindNotice{FrameClass::Standard};
    }
    if (v == "OTA") {
      c.require_done();
      return FrameKindNotice{FrameClass::Ota};
    }
    throw MalformedFrame(tag_pos + 5, "frame kind must be STD or OTA");
  }
  if (tag == "INFO") return decode_info(c);
  if (tag == "DATA") return decode_data(c);
  if (tag == "LISTEN") {
    c.require_done();
    return ListenFrame{};
  }
  if (tag == "PROGOK") {
    c.require_done();
    return ProgOkFrame{};
  }
  if (tag == "OTA") return decode_ota(c);
  throw MalformedFrame(tag_pos, "unknown frame tag \"" + std::string(tag) + "\"");
}

std::string_view frame_tag(const Frame& f) {
  return std::visit(Overloaded{
                        [](const InfoFrame&) { return std::string_view("INFO"); },
                        [](const SensorDataFrame&) { return std::string_view("DATA"); },
                        [](const ListenFrame&) { return std::string_view("LISTEN"); },
                        [](const ProgOkFrame&) { return std::string_view("PROGOK"); },
                        [](const ScheduleUpdateFrame&) { return std::string_view("SCHED"); },
                        [](const OtaSendFrame&) { return std::string_view("OTA_SEND"); },
                        [](const OtaStartFrame&) { return std::string_view("OTA_START"); },
                        [](const OtaDeleteFrame&) { return std::string_view("OTA_DEL"); },
                        [](const FrameKindNotice&) { return std::string_view("KIND"); },
                    },
                    f);
}

int phy_size(const Frame& f) {
  if (const auto* data = std::get_if<SensorDataFrame>(&f)) {
    int extra = static_cast<int>(data->readings.size()) - 1;
    return kDataFramePhyBytes + kExtraReadingPhyBytes * std::max(0, extra);
  }
  if (std::holds_alternative<ListenFrame>(f)) return kListenPhyBytes;
  return static_cast<int>(encode_frame(f).size()) + kPhyOverheadBytes;
}

}  // namespace ssn::proto
