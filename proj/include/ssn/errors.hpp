#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssn {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// --- proto ---

class EmptyAppSet : public Error {
 public:
  EmptyAppSet() : Error("firmware_of: empty application set") {}
};

class InvalidFirmwareId : public Error {
 public:
  explicit InvalidFirmwareId(int id)
      : Error("invalid firmware id " + std::to_string(id) + " (must be in [1,15])") {}
};

class NoPeriodicApps : public Error {
 public:
  NoPeriodicApps() : Error("build_schedule: no periodic applications") {}
};

class ScheduleTooLarge : public Error {
 public:
  explicit ScheduleTooLarge(const std::string& what) : Error("schedule too large: " + what) {}
};

class InvalidSchedule : public Error {
 public:
  explicit InvalidSchedule(const std::string& what) : Error("invalid schedule: " + what) {}
};

class InvalidFrame : public Error {
 public:
  explicit InvalidFrame(const std::string& what) : Error("invalid frame: " + what) {}
};

// Decode failure; carries the byte offset where parsing stopped.
class MalformedFrame : public Error {
 public:
  MalformedFrame(std::size_t offset, const std::string& reason)
      : Error("malformed frame at byte " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(reason) {}
  std::size_t offset() const { return offset_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

// --- energy ---

class DegenerateConfig : public Error {
 public:
  DegenerateConfig() : Error("node configuration has no activity (all duty fractions zero)") {}
};

class InfiniteLifetime : public Error {
 public:
  InfiniteLifetime() : Error("energy rate is zero; lifetime unbounded") {}
};

// --- netsim ---

class TimeReversal : public Error {
 public:
  TimeReversal(long long event_ms, long long now_ms)
      : Error("event scheduled at " + std::to_string(event_ms) + " ms before current time " +
              std::to_string(now_ms) + " ms") {}
};

class NoRoute : public Error {
 public:
  NoRoute(int src, int dst)
      : Error("no route between node " + std::to_string(src) + " and node " +
              std::to_string(dst)) {}
};

class BadTopology : public Error {
 public:
  explicit BadTopology(const std::string& what) : Error("bad topology: " + what) {}
};

// --- node ---

class SdFull : public Error {
 public:
  SdFull() : Error("SD card is full") {}
};

class UnknownFirmware : public Error {
 public:
  explicit UnknownFirmware(int id)
      : Error("firmware " + std::to_string(id) + " not present on SD card") {}
};

// --- controller ---

class NoEligibleNode : public Error {
 public:
  NoEligibleNode() : Error("no candidate node with battery above threshold") {}
};

// --- store ---

class ForeignKeyViolation : public Error {
 public:
  explicit ForeignKeyViolation(const std::string& what) : Error("foreign key violation: " + what) {}
};

class DuplicateSdEntry : public Error {
 public:
  DuplicateSdEntry(int device, int fw)
      : Error("SD entry (device " + std::to_string(device) + ", firmware " + std::to_string(fw) +
              ") already recorded") {}
};

// --- cli / scenario ---

class ScenarioParseError : public Error {
 public:
  ScenarioParseError(int line, const std::string& what)
      : Error("scenario line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class MissingData : public Error {
 public:
  explicit MissingData(const std::string& what) : Error("missing data: " + what) {}
};

}  // namespace ssn
