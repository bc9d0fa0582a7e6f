#include <doctest.h>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sead/catalogue.hpp"
#include "sead/mdl.hpp"
#include "sead/runtime.hpp"

using namespace sead;

namespace {

struct RecordingWorld : rt::World {
  double clock = 0.0;
  CorrelationId next_corr = 1000;
  std::vector<Message> sent;
  std::map<VehicleId, rt::Peek> peers;
  std::map<VehicleId, std::vector<std::pair<std::uint64_t, double>>> armed;
  std::vector<std::pair<VehicleId, std::uint64_t>> cancelled;
  std::map<VehicleId, rt::HeadwayDirective> headways;
  std::map<VehicleId, rt::MoveDirective> moves;
  std::vector<std::pair<VehicleId, rt::PlatoonInfo>> adoptions;
  std::vector<rt::TraceEvent> events;

  double now_s() const override { return clock; }
  CorrelationId fresh_correlation() override { return ++next_corr; }
  void send(Message m) override { sent.push_back(std::move(m)); }
  void arm_timer(const VehicleId& owner, std::uint64_t seq, double deadline_s) override {
    armed[owner].push_back({seq, deadline_s});
  }
  void cancel_timer(const VehicleId& owner, std::uint64_t seq) override {
    cancelled.push_back({owner, seq});
  }
  void set_headway(const VehicleId& v, const rt::HeadwayDirective& d) override { headways[v] = d; }
  void set_move(const VehicleId& v, const rt::MoveDirective& d) override { moves[v] = d; }
  void clear_move(const VehicleId& v) override { moves.erase(v); }
  void clear_motion(const VehicleId& v) override {
    moves.erase(v);
    headways.erase(v);
  }
  std::optional<rt::Peek> peek(const VehicleId& v) const override {
    auto it = peers.find(v);
    if (it == peers.end()) return std::nullopt;
    return it->second;
  }
  void adopt_platoon(const VehicleId& member, const rt::PlatoonInfo& p) override {
    adoptions.push_back({member, p});
    peers[member].platoon = p;
  }
  void trace(rt::TraceEvent e) override { events.push_back(std::move(e)); }

  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    for (const auto& e : events)
      if (e.kind == "warning") out.push_back(e.fields.at("message").get<std::string>());
    return out;
  }
  std::vector<std::string> ops() const {
    std::vector<std::string> out;
    for (const auto& e : events)
      if (e.kind == "primitive") out.push_back(e.fields.at("op").get<std::string>());
    return out;
  }
  const Message* last(MessageKind k) const {
    for (auto it = sent.rbegin(); it != sent.rend(); ++it)
      if (it->kind == k) return &*it;
    return nullptr;
  }
  bool warned(const std::string& needle) const {
    for (const auto& w : warnings())
      if (w.find(needle) != std::string::npos) return true;
    return false;
  }
};

const mdl::CompiledBehaviour& behaviour() {
  static mdl::CompileResult r = mdl::compile(catalogue::builtin_registry());
  REQUIRE(r.ok());
  return r.behaviour;
}

const rt::RuntimeConfig& config() {
  static rt::RuntimeConfig c;
  return c;
}

rt::PlatoonInfo platoon(std::vector<VehicleId> members) {
  rt::PlatoonInfo p;
  p.leader = members.front();
  p.members = std::move(members);
  return p;
}

Message msg(MessageKind k, const std::string& action, const VehicleId& from, const VehicleId& to,
            CorrelationId corr, Payload payload = {}) {
  Message m;
  m.kind = k;
  m.action = action;
  m.from = from;
  m.to = {to};
  m.correlation = corr;
  m.payload = std::move(payload);
  return m;
}

}  // namespace

TEST_CASE("gap closure order runs the reactive side through to confirmation") {
  RecordingWorld w;
  rt::Agent b("B", IdleState::PF, platoon({"A", "B"}), &behaviour(), &w, &config());

  b.on_message(msg(MessageKind::ORD, "GAPCLOSE", "A", "B", 7,
                   {{"ahead", std::string("A")}, {"space_m", 10.0}}));

  CHECK(b.busy());
  CHECK(b.idle() == IdleState::TPL);
  CHECK(b.platoon().leader == "B");
  CHECK(b.platoon().members == std::vector<VehicleId>{"B"});
  REQUIRE(w.headways.count("B"));
  CHECK(w.headways["B"].ahead == "A");
  CHECK(w.headways["B"].space_m == 10.0);
  REQUIRE(!w.armed["B"].empty());
  CHECK(w.armed["B"].back().second == 60.0);  // inline deadline of the closing state

  b.on_arrived();

  const Message* dn = w.last(MessageKind::DN);
  REQUIRE(dn);
  CHECK(dn->action == "GAPCLOSE");
  CHECK(dn->correlation == 7);
  CHECK(dn->to == std::vector<VehicleId>{"A"});
  CHECK(!b.busy());
  CHECK(b.idle() == IdleState::PF);
  CHECK(b.platoon().leader == "A");
  CHECK(b.platoon().members == std::vector<VehicleId>{"A", "B"});
}

TEST_CASE("orders for the wrong idle state or a busy vehicle are dropped") {
  RecordingWorld w;
  rt::Agent free_vehicle("B", IdleState::FV, rt::solo_platoon("B"), &behaviour(), &w, &config());
  free_vehicle.on_message(msg(MessageKind::ORD, "GAPCLOSE", "A", "B", 1,
                              {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  CHECK(!free_vehicle.busy());
  CHECK(w.warned("requires"));

  RecordingWorld w2;
  rt::Agent pf("B", IdleState::PF, platoon({"A", "B"}), &behaviour(), &w2, &config());
  pf.on_message(msg(MessageKind::ORD, "GAPCLOSE", "A", "B", 1,
                    {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  REQUIRE(pf.busy());
  pf.on_message(msg(MessageKind::ORD, "SPLIT_AT", "A", "B", 2,
                    {{"ahead", std::string("A")}, {"space_m", 30.0}}));
  CHECK(w2.warned("busy"));

  RecordingWorld w3;
  rt::Agent idle("B", IdleState::PF, platoon({"A", "B"}), &behaviour(), &w3, &config());
  idle.on_message(msg(MessageKind::DN, "GAPCLOSE", "A", "B", 99));
  CHECK(w3.warned("unhandled"));
}

TEST_CASE("a request sends REQ and survives rejection") {
  RecordingWorld w;
  rt::Agent b("B", IdleState::FV, rt::solo_platoon("B"), &behaviour(), &w, &config());

  CHECK(b.request("JOIN_TAIL", "A", {}));
  CHECK(b.busy());
  const Message* req = w.last(MessageKind::REQ);
  REQUIRE(req);
  CHECK(req->action == "JOIN_TAIL");
  CHECK(req->to == std::vector<VehicleId>{"A"});
  CHECK(w.armed["B"].back().second == 15.0);  // negotiation deadline

  b.on_message(msg(MessageKind::NACK, "JOIN_TAIL", "A", "B", req->correlation));
  CHECK(!b.busy());
  CHECK(b.idle() == IdleState::FV);
}

TEST_CASE("an accepted request leaves the requester waiting under a guard timer") {
  RecordingWorld w;
  rt::Agent b("B", IdleState::FV, rt::solo_platoon("B"), &behaviour(), &w, &config());
  REQUIRE(b.request("JOIN_TAIL", "A", {}));
  CorrelationId corr = w.last(MessageKind::REQ)->correlation;

  b.on_message(msg(MessageKind::ACK, "JOIN_TAIL", "A", "B", corr));
  CHECK(!b.busy());  // the negotiation concluded; the vehicle rests mid-manoeuvre
  CHECK(b.idle() == IdleState::WFV);
  REQUIRE(!w.armed["B"].empty());
  auto guard = w.armed["B"].back();
  CHECK(guard.second == config().idle_timeout_s);

  b.on_timer(guard.first);  // nothing followed up: revert on the guard deadline
  CHECK(b.idle() == IdleState::FV);
  CHECK(w.warned("waited too long"));
}

TEST_CASE("a leader negotiates and drives a tail join step by step") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A"}), &behaviour(), &w, &config());
  w.peers["B"] = {IdleState::FV, rt::solo_platoon("B")};

  a.on_message(msg(MessageKind::REQ, "JOIN_TAIL", "B", "A", 42));

  const Message* ack = w.last(MessageKind::ACK);
  REQUIRE(ack);
  CHECK(ack->correlation == 42);  // the negotiation answers on the request correlation
  CHECK(ack->action == "JOIN_TAIL");

  const Message* ord1 = w.last(MessageKind::ORD);
  REQUIRE(ord1);
  CHECK(ord1->action == "MOVETOPOS");
  CHECK(ord1->correlation != 42);  // later steps mint their own correlation
  CHECK(std::get<std::string>(ord1->payload.at("target")) == "A");
  CHECK(std::get<double>(ord1->payload.at("offset_m")) == -6.0);
  CHECK(std::get<double>(ord1->payload.at("lane_offset")) == 0.0);

  w.peers["B"] = {IdleState::WFV, rt::solo_platoon("B")};
  a.on_message(msg(MessageKind::DN, "MOVETOPOS", "B", "A", ord1->correlation));

  const Message* ord2 = w.last(MessageKind::ORD);
  REQUIRE(ord2);
  CHECK(ord2->action == "ATTACH");
  CHECK(ord2->correlation != ord1->correlation);
  CHECK(std::get<std::string>(ord2->payload.at("ahead")) == "A");
  CHECK(std::get<double>(ord2->payload.at("space_m")) == 6.0);

  // the joiner attached and claims membership; the final poll adopts it
  w.peers["B"] = {IdleState::PF, platoon({"A", "B"})};
  a.on_message(msg(MessageKind::DN, "ATTACH", "B", "A", ord2->correlation));

  CHECK(!a.busy());
  CHECK(a.platoon().members == std::vector<VehicleId>{"A", "B"});
  bool completed = false;
  for (const auto& e : w.events)
    if (e.kind == "result" && e.fields.value("scope", "") == "manoeuvre" &&
        e.fields.value("action", "") == "JOIN_TAIL")
      completed = true;
  CHECK(completed);
}

TEST_CASE("a full platoon declines a join request") {
  rt::RuntimeConfig tiny;
  tiny.max_platoon_size = 1;
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A"}), &behaviour(), &w, &tiny);

  a.on_message(msg(MessageKind::REQ, "JOIN_TAIL", "B", "A", 9));

  const Message* nack = w.last(MessageKind::NACK);
  REQUIRE(nack);
  CHECK(nack->correlation == 9);
  CHECK(!a.busy());
  CHECK(w.last(MessageKind::ACK) == nullptr);
}

TEST_CASE("requests to a non-leader or an engaged leader are turned down") {
  RecordingWorld w;
  rt::Agent pf("B", IdleState::PF, platoon({"A", "B"}), &behaviour(), &w, &config());
  pf.on_message(msg(MessageKind::REQ, "JOIN_TAIL", "C", "B", 5));
  REQUIRE(w.last(MessageKind::NACK));
  CHECK(w.warned("not a platoon leader"));

  RecordingWorld w2;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B"}), &behaviour(), &w2, &config());
  w2.peers["B"] = {IdleState::PF, platoon({"A", "B"})};
  REQUIRE(a.initiate("GAPCLOSE", {{"B", "B"}},
                     {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  a.on_message(msg(MessageKind::REQ, "JOIN_TAIL", "C", "A", 6));
  REQUIRE(w2.last(MessageKind::NACK));
  CHECK(w2.warned("already engaged"));
}

TEST_CASE("initiating a bare sub-manoeuvre wraps it into a single step") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B"}), &behaviour(), &w, &config());
  w.peers["B"] = {IdleState::PF, platoon({"A", "B"})};

  REQUIRE(a.initiate("GAPCLOSE", {{"B", "B"}},
                     {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  CHECK(a.busy());

  const Message* ord = w.last(MessageKind::ORD);
  REQUIRE(ord);
  CHECK(ord->action == "GAPCLOSE");
  CHECK(std::get<double>(ord->payload.at("space_m")) == 10.0);
  CHECK(w.armed["A"].back().second == 30.0);

  a.on_message(msg(MessageKind::DN, "GAPCLOSE", "B", "A", ord->correlation));
  CHECK(!a.busy());
  bool completed = false;
  for (const auto& e : w.events)
    if (e.kind == "result" && e.fields.value("scope", "") == "manoeuvre" &&
        e.fields.value("action", "") == "GAPCLOSE")
      completed = true;
  CHECK(completed);
}

TEST_CASE("initiation is refused away from the leader seat") {
  RecordingWorld w;
  rt::Agent pf("B", IdleState::PF, platoon({"A", "B"}), &behaviour(), &w, &config());
  CHECK(!pf.initiate("GAPCLOSE", {{"B", "B"}}, {}));
  CHECK(w.warned("only a platoon leader"));

  RecordingWorld w2;
  rt::Agent a("A", IdleState::PL, platoon({"A"}), &behaviour(), &w2, &config());
  CHECK(!a.initiate("JOIN_TAIL", {{"B", "B"}}, {}));
  CHECK(w2.warned("follower request"));
  CHECK(!a.initiate("NOPE", {}, {}));
  CHECK(w2.warned("unknown manoeuvre"));

  // counterpart in the wrong idle state
  RecordingWorld w3;
  rt::Agent a3("A", IdleState::PL, platoon({"A", "B"}), &behaviour(), &w3, &config());
  w3.peers["B"] = {IdleState::FV, rt::solo_platoon("B")};
  CHECK(!a3.initiate("GAPCLOSE", {{"B", "B"}},
                     {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  CHECK(w3.warned("expects"));
  CHECK(!a3.initiate("GAPCLOSE", {}, {}));
  CHECK(w3.warned("no vehicle bound"));
}

TEST_CASE("a timed out order aborts the manoeuvre step") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B"}), &behaviour(), &w, &config());
  w.peers["B"] = {IdleState::WFV, rt::solo_platoon("B")};

  REQUIRE(a.initiate("MOVETOPOS", {{"B", "B"}},
                     {{"target", std::string("A")}, {"offset_m", -6.0}, {"lane_offset", 0.0}}));
  auto armed = w.armed["A"].back();
  CHECK(armed.second == 30.0);

  a.on_timer(armed.first);

  const Message* abt = w.last(MessageKind::ABT);
  REQUIRE(abt);
  CHECK(abt->action == "MOVETOPOS");
  CHECK(!a.busy());
  bool aborted = false;
  for (const auto& e : w.events)
    if (e.kind == "result" && e.fields.value("scope", "") == "step" &&
        e.fields.value("labels", std::vector<std::string>{}) == std::vector<std::string>{"RA1"})
      aborted = true;
  CHECK(aborted);
}

TEST_CASE("a split order rewrites every downstream view") {
  RecordingWorld w;
  rt::Agent c("C", IdleState::PF, platoon({"A", "B", "C", "D", "E"}), &behaviour(), &w, &config());

  c.on_message(msg(MessageKind::ORD, "SPLIT_AT", "A", "C", 5,
                   {{"ahead", std::string("B")}, {"space_m", 30.0}}));
  CHECK(c.idle() == IdleState::TPL);
  CHECK(c.platoon().members == std::vector<VehicleId>{"C", "D", "E"});

  c.on_arrived();

  CHECK(c.idle() == IdleState::PL);
  CHECK(c.platoon().leader == "C");
  CHECK(c.platoon().members == std::vector<VehicleId>{"C", "D", "E"});
  REQUIRE(w.adoptions.size() == 2);
  CHECK(w.adoptions[0].first == "D");
  CHECK(w.adoptions[1].first == "E");
  CHECK(w.adoptions[0].second.leader == "C");
  REQUIRE(w.last(MessageKind::DN));
  CHECK(!c.busy());
}

TEST_CASE("temporary leadership heals back into the parent platoon") {
  RecordingWorld w;
  rt::Agent b("B", IdleState::PF, platoon({"A", "B", "C"}), &behaviour(), &w, &config());

  b.on_message(msg(MessageKind::ORD, "GAPCLOSE", "A", "B", 3,
                   {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  CHECK(b.idle() == IdleState::TPL);
  CHECK(b.platoon().members == std::vector<VehicleId>{"B", "C"});

  b.on_arrived();
  CHECK(b.idle() == IdleState::PF);
  CHECK(b.platoon().leader == "A");
  CHECK(b.platoon().members == std::vector<VehicleId>{"A", "B", "C"});
  CHECK(w.adoptions.empty());  // the temporary view never reached the tail
}

TEST_CASE("a terminal split order takes the abort path of the running instance") {
  RecordingWorld w;
  rt::Agent b("B", IdleState::PF, platoon({"A", "B", "C"}), &behaviour(), &w, &config());
  b.on_message(msg(MessageKind::ORD, "GAPCLOSE", "A", "B", 3,
                   {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  REQUIRE(b.idle() == IdleState::TPL);

  b.on_message(msg(MessageKind::TMPL_SPLIT, "TMPL_SPLIT", "A", "B", 77));

  CHECK(b.idle() == IdleState::PL);
  CHECK(b.platoon().members == std::vector<VehicleId>{"B", "C"});
  CHECK(!b.busy());
  bool ra1 = false;
  for (const auto& e : w.events)
    if (e.kind == "result" && e.fields.value("label", "") == "RA1") ra1 = true;
  CHECK(ra1);

  RecordingWorld w2;
  rt::Agent pf("D", IdleState::PF, platoon({"A", "D"}), &behaviour(), &w2, &config());
  pf.on_message(msg(MessageKind::TMPL_SPLIT, "TMPL_SPLIT", "A", "D", 78));
  CHECK(pf.idle() == IdleState::PF);
  CHECK(w2.warned("not a temporary leader"));
}

TEST_CASE("the membership poll keeps shielded segments and departed vehicles out") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B", "C", "D"}), &behaviour(), &w, &config());
  // B temporarily leads {B, C}; D is a plain follower; E is attaching at the tail
  w.peers["B"] = {IdleState::TPL, platoon({"B", "C"})};
  w.peers["C"] = {IdleState::PF, platoon({"B", "C"})};
  w.peers["D"] = {IdleState::PF, platoon({"A", "B", "C", "D"})};
  w.peers["E"] = {IdleState::WFV, rt::solo_platoon("E")};

  REQUIRE(a.initiate("ATTACH", {{"B", "E"}},
                     {{"ahead", std::string("D")}, {"space_m", 6.0}}));
  const Message* ord = w.last(MessageKind::ORD);
  REQUIRE(ord);

  w.peers["E"] = {IdleState::PF, platoon({"A", "B", "C", "D", "E"})};
  a.on_message(msg(MessageKind::DN, "ATTACH", "E", "A", ord->correlation));

  CHECK(a.platoon().members == std::vector<VehicleId>{"A", "B", "C", "D", "E"});
  std::vector<VehicleId> adopted;
  for (const auto& ad : w.adoptions) adopted.push_back(ad.first);
  CHECK(adopted == std::vector<VehicleId>{"D", "E"});  // the temporary segment keeps its view
}

TEST_CASE("a leaver disappears from the next membership poll") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B", "C"}), &behaviour(), &w, &config());
  w.peers["B"] = {IdleState::PF, platoon({"A", "B", "C"})};
  w.peers["C"] = {IdleState::PF, platoon({"A", "B", "C"})};

  REQUIRE(a.initiate("LEAVE_PREP", {{"B", "B"}}, {}));
  const Message* ord = w.last(MessageKind::ORD);
  REQUIRE(ord);

  w.peers["B"] = {IdleState::FV, rt::solo_platoon("B")};  // departed
  a.on_message(msg(MessageKind::DN, "LEAVE_PREP", "B", "A", ord->correlation));

  CHECK(a.platoon().members == std::vector<VehicleId>{"A", "C"});
  REQUIRE(w.adoptions.size() == 1);
  CHECK(w.adoptions[0].first == "C");
}

TEST_CASE("a middle join binds the gap opener by requested position") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B", "C"}), &behaviour(), &w, &config());
  w.peers["D"] = {IdleState::FV, rt::solo_platoon("D")};

  a.on_message(msg(MessageKind::REQ, "JOIN_MIDDLE", "D", "A", 11, {{"position", 2.0}}));

  REQUIRE(w.last(MessageKind::ACK));
  const Message* ord = w.last(MessageKind::ORD);
  REQUIRE(ord);
  CHECK(ord->action == "MOVETOPOS");
  // approach target: the member holding the requested slot
  CHECK(std::get<std::string>(ord->payload.at("target")) == "C");
  CHECK(std::get<double>(ord->payload.at("lane_offset")) == 1.0);

  RecordingWorld w2;
  rt::Agent a2("A", IdleState::PL, platoon({"A", "B", "C"}), &behaviour(), &w2, &config());
  a2.on_message(msg(MessageKind::REQ, "JOIN_MIDDLE", "D", "A", 12, {{"position", 9.0}}));
  REQUIRE(w2.last(MessageKind::NACK));
  CHECK(!a2.busy());
}

TEST_CASE("a two-lane spread runs both gap openers at once") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B", "C", "D", "E"}), &behaviour(), &w, &config());
  for (const char* v : {"B", "C", "D", "E"})
    w.peers[v] = {IdleState::PF, platoon({"A", "B", "C", "D", "E"})};

  REQUIRE(a.initiate("SPREAD", {{"B1", "B"}, {"B2", "D"}}, {}));

  std::vector<std::pair<VehicleId, CorrelationId>> orders;
  for (const auto& m : w.sent)
    if (m.kind == MessageKind::ORD) orders.push_back({m.to[0], m.correlation});
  REQUIRE(orders.size() == 2);
  CHECK(orders[0].first == "B");
  CHECK(orders[1].first == "D");
  CHECK(orders[0].second != orders[1].second);

  a.on_message(msg(MessageKind::DN, "GAPOPEN", "B", "A", orders[0].second));
  CHECK(a.busy());  // one branch is still out
  a.on_message(msg(MessageKind::DN, "GAPOPEN", "D", "A", orders[1].second));
  CHECK(!a.busy());
  bool completed = false;
  for (const auto& e : w.events)
    if (e.kind == "result" && e.fields.value("scope", "") == "manoeuvre" &&
        e.fields.value("labels", std::vector<std::string>{}) ==
            std::vector<std::string>{"RS", "RS"})
      completed = true;
  CHECK(completed);
}

TEST_CASE("an aborted closure drops the counterpart's segment from the roster") {
  RecordingWorld w;
  rt::Agent a("A", IdleState::PL, platoon({"A", "B", "C"}), &behaviour(), &w, &config());
  w.peers["B"] = {IdleState::PF, platoon({"A", "B", "C"})};
  REQUIRE(a.initiate("GAPCLOSE", {{"B", "B"}},
                     {{"ahead", std::string("A")}, {"space_m", 10.0}}));
  auto armed = w.armed["A"].back();

  // the counterpart went temporary-lead and never confirmed
  w.peers["B"] = {IdleState::TPL, platoon({"B", "C"})};
  a.on_timer(armed.first);

  REQUIRE(w.last(MessageKind::ABT));
  CHECK(a.platoon().members == std::vector<VehicleId>{"A"});
  CHECK(!a.busy());
}
