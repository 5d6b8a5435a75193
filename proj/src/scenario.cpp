#include "ssn/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssn/errors.hpp"

namespace ssn::scn {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') break;
    out.push_back(tok);
  }
  return out;
}

long parse_long(const std::string& tok, int line, const char* what) {
  long v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    throw ScenarioParseError(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

int64_t parse_time_ms(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    double t = std::stod(tok, &used);
    if (used != tok.size() || t < 0 || !std::isfinite(t))
      throw ScenarioParseError(line, "bad time '" + tok + "'");
    return std::llround(t * 1000.0);
  } catch (const ScenarioParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ScenarioParseError(line, "bad time '" + tok + "'");
  }
}

proto::AppKind parse_app(const std::string& tok, int line) {
  if (auto k = proto::app_from_name(tok)) return *k;
  if (auto k = proto::app_from_tag(tok)) return *k;
  throw ScenarioParseError(line, "unknown application '" + tok + "'");
}

// Splits "key=value"; returns false when the token has no '='.
bool split_kv(const std::string& tok, std::string& key, std::string& value) {
  auto eq = tok.find('=');
  if (eq == std::string::npos) return false;
  key = tok.substr(0, eq);
  value = tok.substr(eq + 1);
  return true;
}

}  // namespace

std::vector<proto::AppConfig> ScenarioNode::configs() const {
  std::vector<proto::AppConfig> out;
  if (!firmware) return out;
  for (proto::AppKind k : proto::kAllApps) {
    if (!firmware->has(k)) continue;
    if (proto::is_periodic(k)) {
      auto it = intervals.find(k);
      out.push_back({k, it != intervals.end() ? it->second : 60u});
    } else {
      out.push_back({k, std::nullopt});
    }
  }
  return out;
}

net::Topology Scenario::topology() const {
  net::Topology topo;
  for (const ScenarioNode& n : nodes) topo.add_node(n.id, n.role, n.parent);
  for (const auto& [a, b] : links) topo.add_link(a, b);
  topo.validate();
  return topo;
}

const ScenarioNode* Scenario::node(int id) const {
  for (const ScenarioNode& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

Scenario parse_scenario(std::istream& in) {
  Scenario s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& head = toks[0];

    if (head == "node") {
      if (toks.size() < 3) throw ScenarioParseError(lineno, "node needs <id> <role>");
      ScenarioNode n;
      n.id = static_cast<int>(parse_long(toks[1], lineno, "node id"));
      if (s.node(n.id)) throw ScenarioParseError(lineno, "duplicate node " + toks[1]);
      try {
        n.role = net::role_from_name(toks[2]);
      } catch (const Error&) {
        throw ScenarioParseError(lineno, "unknown role '" + toks[2] + "'");
      }
      for (std::size_t i = 3; i < toks.size(); ++i) {
        std::string key, value;
        if (!split_kv(toks[i], key, value))
          throw ScenarioParseError(lineno, "expected key=value, got '" + toks[i] + "'");
        if (key == "parent") {
          n.parent = static_cast<int>(parse_long(value, lineno, "parent id"));
        } else if (key == "fw") {
          long fw = parse_long(value, lineno, "firmware id");
          if (fw < 1 || fw > 15)
            throw ScenarioParseError(lineno, "firmware id out of range '" + value + "'");
          n.firmware = proto::FirmwareId(static_cast<int>(fw));
        } else if (key == "listen") {
          long m = parse_long(value, lineno, "listen interval");
          if (m < 1) throw ScenarioParseError(lineno, "listen interval must be >= 1");
          n.listen_min = static_cast<uint32_t>(m);
        } else if (key == "temp" || key == "hum" || key == "ldr") {
          long iv = parse_long(value, lineno, "sensing interval");
          if (iv < 1) throw ScenarioParseError(lineno, "sensing interval must be >= 1");
          n.intervals[*proto::app_from_tag(key == "temp"   ? "TEMP"
                                           : key == "hum" ? "HUM"
                                                          : "LDR")] =
              static_cast<uint32_t>(iv);
        } else {
          throw ScenarioParseError(lineno, "unknown node option '" + key + "'");
        }
      }
      if (!n.intervals.empty() && !n.firmware)
        throw ScenarioParseError(lineno, "sensing intervals need fw=");
      if (n.firmware)
        for (const auto& [k, iv] : n.intervals)
          if (!n.firmware->has(k))
            throw ScenarioParseError(lineno, "interval for application not in firmware");
      s.nodes.push_back(std::move(n));

    } else if (head == "link") {
      if (toks.size() != 3) throw ScenarioParseError(lineno, "link needs <a> <b>");
      s.links.emplace_back(static_cast<int>(parse_long(toks[1], lineno, "node id")),
                           static_cast<int>(parse_long(toks[2], lineno, "node id")));

    } else if (head == "arrive") {
      if (toks.size() < 3) throw ScenarioParseError(lineno, "arrive needs <t_s> <app>");
      Directive d;
      d.kind = Directive::Kind::Arrive;
      d.time_ms = parse_time_ms(toks[1], lineno);
      d.app = parse_app(toks[2], lineno);
      for (std::size_t i = 3; i < toks.size(); ++i) {
        std::string key, value;
        if (split_kv(toks[i], key, value)) {
          if (key != "activity")
            throw ScenarioParseError(lineno, "unknown arrive option '" + key + "'");
          long a = parse_long(value, lineno, "activity");
          if (a < 1) throw ScenarioParseError(lineno, "activity must be >= 1");
          d.activity_s = static_cast<uint32_t>(a);
        } else {
          long iv = parse_long(toks[i], lineno, "sensing interval");
          if (iv < 1) throw ScenarioParseError(lineno, "sensing interval must be >= 1");
          d.interval_s = static_cast<uint32_t>(iv);
        }
      }
      if (proto::is_periodic(d.app) && !d.interval_s)
        throw ScenarioParseError(lineno, "periodic application needs a sensing interval");
      s.directives.push_back(d);

    } else if (head == "depart") {
      if (toks.size() != 3) throw ScenarioParseError(lineno, "depart needs <t_s> <app>");
      Directive d;
      d.kind = Directive::Kind::Depart;
      d.time_ms = parse_time_ms(toks[1], lineno);
      d.app = parse_app(toks[2], lineno);
      s.directives.push_back(d);

    } else if (head == "pir") {
      if (toks.size() != 3) throw ScenarioParseError(lineno, "pir needs <t_s> <node_id>");
      Directive d;
      d.kind = Directive::Kind::Pir;
      d.time_ms = parse_time_ms(toks[1], lineno);
      d.node_id = static_cast<int>(parse_long(toks[2], lineno, "node id"));
      s.directives.push_back(d);

    } else if (head == "pirgen") {
      if (toks.size() != 5)
        throw ScenarioParseError(lineno, "pirgen needs <node_id> <count> <start_s> <end_s>");
      PirGen g;
      g.node_id = static_cast<int>(parse_long(toks[1], lineno, "node id"));
      g.count = static_cast<int>(parse_long(toks[2], lineno, "count"));
      g.start_ms = parse_time_ms(toks[3], lineno);
      g.end_ms = parse_time_ms(toks[4], lineno);
      if (g.count < 0 || g.end_ms <= g.start_ms)
        throw ScenarioParseError(lineno, "pirgen needs count >= 0 and start < end");
      s.pirgens.push_back(g);

    } else if (head == "battery") {
      if (toks.size() != 4)
        throw ScenarioParseError(lineno, "battery needs <t_s> <node_id> <pct>");
      Directive d;
      d.kind = Directive::Kind::Battery;
      d.time_ms = parse_time_ms(toks[1], lineno);
      d.node_id = static_cast<int>(parse_long(toks[2], lineno, "node id"));
      long pct = parse_long(toks[3], lineno, "battery percentage");
      if (pct < 0 || pct > 100)
        throw ScenarioParseError(lineno, "battery percentage out of range");
      d.battery_pct = static_cast<int>(pct);
      s.directives.push_back(d);

    } else {
      throw ScenarioParseError(lineno, "unknown directive '" + head + "'");
    }
  }

  std::stable_sort(s.directives.begin(), s.directives.end(),
                   [](const Directive& a, const Directive& b) { return a.time_ms < b.time_ms; });
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError(0, "cannot open " + path);
  return parse_scenario(in);
}

}  // namespace ssn::scn
