#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "doctest.h"
#include "ssn/netsim.hpp"

using namespace ssn;
using namespace ssn::net;
using proto::FirmwareId;

namespace {

Topology line_topology() {
  // 0 (coordinator) - 1 - 2, with an end device 3 hanging off router 2
  Topology t;
  t.add_node(0, NodeRole::Coordinator);
  t.add_node(1, NodeRole::Router);
  t.add_node(2, NodeRole::Router);
  t.add_node(3, NodeRole::EndDevice, 2);
  t.add_link(0, 1);
  t.add_link(1, 2);
  return t;
}

}  // namespace

TEST_CASE("topology validation") {
  SUBCASE("valid line passes") { CHECK_NOTHROW(line_topology().validate()); }
  SUBCASE("exactly one coordinator") {
    Topology t;
    t.add_node(0, NodeRole::Coordinator);
    t.add_node(1, NodeRole::Coordinator);
    CHECK_THROWS_AS(t.validate(), BadTopology);
  }
  SUBCASE("no coordinator") {
    Topology t;
    t.add_node(1, NodeRole::Router);
    CHECK_THROWS_AS(t.validate(), BadTopology);
  }
  SUBCASE("end device needs an existing parent") {
    Topology t;
    t.add_node(0, NodeRole::Coordinator);
    t.add_node(3, NodeRole::EndDevice, 9);
    CHECK_THROWS_AS(t.validate(), BadTopology);
  }
  SUBCASE("end devices take no radio links") {
    Topology t;
    t.add_node(0, NodeRole::Coordinator);
    t.add_node(1, NodeRole::Router);
    t.add_node(3, NodeRole::EndDevice, 1);
    t.add_link(0, 1);
    CHECK_THROWS_AS(t.add_link(1, 3), BadTopology);
  }
  SUBCASE("duplicate ids are rejected") {
    Topology t;
    t.add_node(0, NodeRole::Coordinator);
    CHECK_THROWS_AS(t.add_node(0, NodeRole::Router), BadTopology);
  }
}

TEST_CASE("routing") {
  Topology t = line_topology();
  CHECK(t.route(0, 2) == std::vector<int>{0, 1, 2});
  CHECK(t.route(0, 3) == std::vector<int>{0, 1, 2, 3});  // last leg via parent
  CHECK(t.route(3, 0) == std::vector<int>{3, 2, 1, 0});
  CHECK(t.hop_count(0, 1) == 1);
  CHECK(t.hop_count(0, 3) == 3);
  CHECK(t.coordinator_id() == 0);
  CHECK(t.end_devices() == std::vector<int>{3});
  CHECK_THROWS_AS(t.route(1, 99), NoRoute);

  // ties between equal-length paths break toward lower node ids
  Topology d;
  d.add_node(0, NodeRole::Coordinator);
  d.add_node(1, NodeRole::Router);
  d.add_node(2, NodeRole::Router);
  d.add_node(3, NodeRole::Router);
  d.add_link(0, 1);
  d.add_link(0, 2);
  d.add_link(1, 3);
  d.add_link(2, 3);
  CHECK(d.route(0, 3) == std::vector<int>{0, 1, 3});
  CHECK(route_string(d.route(0, 3)) == "0>1>3");
}

TEST_CASE("transfer descriptors") {
  LinkModel lm;
  // measured frame counts for the four reference images
  struct Anchor {
    int fw;
    long frames;
    long size;
  };
  for (Anchor a : {Anchor{1, 982, 74080}, Anchor{3, 1058, 79704}, Anchor{7, 1061, 79754},
                   Anchor{15, 1071, 80506}}) {
    TransferDescriptor d = descriptor_for(FirmwareId(a.fw), lm);
    CHECK(d.frames == a.frames);
    CHECK(d.size_bytes == a.size);
    CHECK(d.bytes_sent() == a.frames * 81);
  }
  // synthetic images are sized by application count and chunked at 75 bytes
  TransferDescriptor d2 = descriptor_for(FirmwareId(2), lm);
  CHECK(d2.size_bytes == 74080);  // one application, same class as firmware 1
  CHECK(d2.frames == (d2.size_bytes + 74) / 75);
  TransferDescriptor d6 = descriptor_for(FirmwareId(6), lm);
  CHECK(d6.size_bytes == 79704);  // two applications, same class as firmware 3
  TransferDescriptor d14 = descriptor_for(FirmwareId(14), lm, 2);
  CHECK(d14.size_bytes == 79754);  // three applications
  CHECK(d14.hop_count == 2);
}

TEST_CASE("image transfer timing") {
  LinkModel lm;
  struct Expect {
    int fw;
    double duration;
  };
  for (Expect e : {Expect{1, 118.43}, Expect{3, 127.59}, Expect{7, 127.95}, Expect{15, 129.16}}) {
    TransferTiming t = ota_transfer(descriptor_for(FirmwareId(e.fw), lm), lm);
    CHECK(t.duration_s == doctest::Approx(e.duration).epsilon(0.005));
    CHECK(t.effective_rate_bps / 1000.0 == doctest::Approx(5.37).epsilon(0.005));
  }
  // a second radio hop adds one radio leg per frame
  TransferDescriptor one = descriptor_for(FirmwareId(1), lm, 1);
  TransferDescriptor two = descriptor_for(FirmwareId(1), lm, 2);
  double extra = ota_transfer(two, lm).duration_s - ota_transfer(one, lm).duration_s;
  CHECK(extra == doctest::Approx(one.frames * 102.0 * 8 / lm.radio_bps).epsilon(1e-6));
}

TEST_CASE("command frames pay no processing delay") {
  LinkModel lm;
  double t = command_time_s(102, lm, 1);
  double expected = 102.0 * 8 / kDefaultCoordSerialBps + 102.0 * 8 / lm.radio_bps +
                    102.0 * 8 / kDefaultNodeSerialBps;
  CHECK(t == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("sustained throughput") {
  LinkModel lm;
  Topology t = line_topology();
  double one_hop = max_throughput(t, 0, 1, lm);
  double two_hop = max_throughput(t, 0, 2, lm);
  CHECK(two_hop <= one_hop);
  CHECK(one_hop <= kThroughputCeilingBps);
  CHECK(two_hop > 0);
  CHECK_THROWS_AS(max_throughput(t, 0, 99, lm), NoRoute);

  // a faster controller serial port cannot exceed the stack ceiling
  Topology fast = line_topology();
  fast.set_serial_bps(0, 1e9);
  fast.set_serial_bps(1, 1e9);
  CHECK(max_throughput(fast, 0, 1, lm) <= kThroughputCeilingBps);
}

TEST_CASE("engine orders events by time then insertion") {
  Engine e;
  std::vector<int> order;
  SimEvent a{EventKind::Alarm1, 1};
  SimEvent b{EventKind::Alarm2, 2};
  SimEvent c{EventKind::PirDetect, 3};
  e.schedule(50, b);
  e.schedule(10, a);
  e.schedule(50, c);
  e.run_until(100, [&](const SimEvent& ev) { order.push_back(ev.node); });
  CHECK(order == std::vector<int>{1, 2, 3});
  CHECK(e.now_ms() == 100);
  CHECK(e.empty());
  CHECK_THROWS_AS(e.schedule(99, a), TimeReversal);
}

TEST_CASE("engine handler may schedule follow-ups") {
  Engine e;
  std::vector<int64_t> times;
  SimEvent seed{EventKind::Alarm1, 1};
  e.schedule(10, seed);
  e.run_until(100, [&](const SimEvent& ev) {
    times.push_back(e.now_ms());
    if (times.size() < 3) e.schedule(e.now_ms() + 10, ev);
  });
  CHECK(times == std::vector<int64_t>{10, 20, 30});
}

TEST_CASE("engine exposes pending events for reconciliation") {
  Engine e;
  e.schedule(500, SimEvent{EventKind::FrameArrival, 7});
  e.run_until(100, [](const SimEvent&) {});
  REQUIRE(e.pending_count() == 1);
  CHECK(e.pending()[0].node == 7);
}

TEST_CASE("event log format") {
  EventLog log;
  log.set_seed(42);
  log.append(1000, "NOTE", 0, -1, "hello");
  log.decide(2000, 4, 3, 6);
  REQUIRE(log.lines().size() == 3);
  CHECK(log.lines()[0] == "# seed=42");
  CHECK(log.lines()[1] == "1000\tNOTE\t0\t-\thello");
  CHECK(log.lines()[2] == "2000\tDECIDE\tcase=4\tnode=3\tfw=6");
}

TEST_CASE("network delivers to listening destinations") {
  EventLog log;
  Network net(line_topology(), LinkModel{}, &log);
  proto::Frame f = proto::ListenFrame{};
  auto d = net.send(0, f, 1, 0, true);
  REQUIRE(d.has_value());
  CHECK(d->src == 1);
  CHECK(d->dst == 0);
  CHECK(d->route == "1>0");
  CHECK(d->arrival_ms >= 0);
  CHECK(net.injected() == 1);
  net.mark_delivered(d->frame_id);
  CHECK(net.delivered() == 1);
  bool seen_send = false;
  for (const std::string& line : log.lines())
    if (line.find("\tSEND\t") != std::string::npos &&
        line.find("route=1>0") != std::string::npos)
      seen_send = true;
  CHECK(seen_send);
}

TEST_CASE("network parks frames for sleeping end devices") {
  EventLog log;
  Network net(line_topology(), LinkModel{}, &log);
  proto::Frame f = proto::ProgOkFrame{};
  auto parked = net.send(0, f, 0, 3, false);
  CHECK(!parked.has_value());
  CHECK(net.buffered_count() == 1);

  auto released = net.wake(5000, 3);
  REQUIRE(released.size() == 1);
  CHECK(released[0].dst == 3);
  CHECK(released[0].arrival_ms >= 5000);
  CHECK(net.buffered_count() == 0);
  bool seen_buffer = false, seen_flush = false;
  for (const std::string& line : log.lines()) {
    if (line.find("\tBUFFER\t") != std::string::npos) seen_buffer = true;
    if (line.find("\tFLUSH\t") != std::string::npos) seen_flush = true;
  }
  CHECK(seen_buffer);
  CHECK(seen_flush);
}

TEST_CASE("parent buffer drops the oldest frame at capacity") {
  EventLog log;
  Network net(line_topology(), LinkModel{}, &log);
  for (std::size_t i = 0; i <= Network::kParentBufferCap; ++i)
    net.send(static_cast<int64_t>(i), proto::Frame{proto::ProgOkFrame{}}, 0, 3, false);
  CHECK(net.buffered_count() == Network::kParentBufferCap);
  CHECK(net.dropped() == 1);
  bool seen_drop = false;
  for (const std::string& line : log.lines())
    if (line.find("\tDROP\t") != std::string::npos &&
        line.find("reason=buffer_overflow") != std::string::npos)
      seen_drop = true;
  CHECK(seen_drop);
}

TEST_CASE("frames to awake nodes deliver even across two hops") {
  EventLog log;
  Network net(line_topology(), LinkModel{}, &log);
  auto d = net.send(0, proto::Frame{proto::ListenFrame{}}, 3, 0, true);
  REQUIRE(d.has_value());
  CHECK(d->route == "3>2>1>0");
}
