#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sead/core.hpp"
#include "sead/mdl.hpp"
#include "sead/statemachine.hpp"

// Per-vehicle manoeuvre runtime: message dispatch, the leader-side manoeuvre
// executor (PME), reactive sub-manoeuvre instances (RSM), and the platoon
// bookkeeping done by the structural primitives. The surrounding world —
// clock, channel, timers, physics — is reached only through the World
// interface, so the same agent runs under the simulator and under tests.

namespace sead::rt {

struct RuntimeConfig {
  int max_platoon_size = 8;
  double default_timeout_s = 30.0;  // controlling waits without an explicit deadline
  double idle_timeout_s = 120.0;    // a waiting idle state reverts after this long
};

struct PlatoonInfo {
  VehicleId leader;
  std::vector<VehicleId> members;  // leader first, front to back
  double d = 6.0;                  // intra-platoon gap (m)
  double D = 30.0;                 // gap to anything outside the platoon (m)
  std::optional<double> th_s;      // optional time-headway policy

  bool contains(const VehicleId& v) const;
  int position_of(const VehicleId& v) const;  // -1 when absent
};

PlatoonInfo solo_platoon(const VehicleId& v);

// longitudinal regulation target (SH)
struct HeadwayDirective {
  VehicleId ahead;
  std::optional<double> th_s;  // exactly one of th_s / space_m is set
  std::optional<double> space_m;
};

// positioning target (MTP), relative to an anchor vehicle
struct MoveDirective {
  VehicleId target;  // may be the vehicle itself (hold position)
  double offset_m = 0.0;
  double lane_offset = 0.0;
};

struct TraceEvent {
  std::string kind;
  nlohmann::json fields;
};

// state interrogation answer (V2V status exchange, abstracted)
struct Peek {
  IdleState idle = IdleState::FV;
  PlatoonInfo platoon;
};

class World {
 public:
  virtual ~World() = default;
  virtual double now_s() const = 0;
  virtual CorrelationId fresh_correlation() = 0;
  virtual void send(Message m) = 0;
  virtual void arm_timer(const VehicleId& owner, std::uint64_t seq, double deadline_s) = 0;
  virtual void cancel_timer(const VehicleId& owner, std::uint64_t seq) = 0;
  virtual void set_headway(const VehicleId& v, const HeadwayDirective& d) = 0;
  virtual void set_move(const VehicleId& v, const MoveDirective& d) = 0;
  virtual void clear_move(const VehicleId& v) = 0;
  virtual void clear_motion(const VehicleId& v) = 0;  // headway and move
  virtual std::optional<Peek> peek(const VehicleId& v) const = 0;
  virtual void adopt_platoon(const VehicleId& member, const PlatoonInfo& p) = 0;
  virtual void trace(TraceEvent e) = 0;
};

class Agent {
 public:
  Agent(VehicleId id, IdleState idle, PlatoonInfo platoon,
        const mdl::CompiledBehaviour* behaviour, World* world, const RuntimeConfig* config);

  const VehicleId& id() const { return id_; }
  IdleState idle() const { return idle_; }
  const PlatoonInfo& platoon() const { return platoon_; }
  void set_platoon(PlatoonInfo p) { platoon_ = std::move(p); }
  bool busy() const { return reactive_.has_value() || pme_.has_value(); }

  // leader-side: start a manoeuvre (or a bare sub-manoeuvre) with explicit
  // role → vehicle bindings and an argument pool for the controlling side
  bool initiate(const ActionId& action, const std::map<std::string, VehicleId>& bindings,
                std::map<std::string, PayloadValue> args);

  // requester-side: ask `to` for a negotiated manoeuvre; the payload becomes
  // the forwarded request arguments
  bool request(const ActionId& action, const VehicleId& to,
               std::map<std::string, PayloadValue> payload);

  // operator-side: tell a temporary leader to split off for good
  bool send_tmpl_split(const VehicleId& to);

  void on_message(const Message& m);
  void on_timer(std::uint64_t seq);
  void on_arrived();

 private:
  // one running role machine plus its wiring
  struct Exec {
    sm::RoleMachine machine;
    CorrelationId correlation = 0;
    VehicleId counterpart;
    ActionId wire_action;                         // action stamped on sent messages
    std::map<std::string, PayloadValue> args;     // $arg pool
    std::map<std::string, PayloadValue> payload;  // $payload pool (inbound)
    std::uint64_t timer_seq = 0;
  };

  // leader-side manoeuvre execution: one step at a time, one controlling
  // machine per invocation of the current step
  struct Pme {
    ActionId action;  // manoeuvre id as traced and spoken on the wire
    const mdl::MdlDocument* doc = nullptr;
    std::map<std::string, VehicleId> bindings;           // manoeuvre role → vehicle
    std::map<std::string, PayloadValue> script_args;     // bare sub-manoeuvre arg pool
    std::map<std::string, PayloadValue> request_payload; // adopted from the REQ
    CorrelationId adopted = 0;  // nonzero: first-step child reuses the REQ correlation
    int step = -1;
    std::vector<Exec> children;
    std::unique_ptr<mdl::MdlDocument> wrapper;  // owns the synthesized single-step doc
  };

  void dispatch(const Message& m);
  void handle_request(const Message& m);
  void handle_tmpl_split(const Message& m);
  bool advance(Exec& e, const sm::Event& event);
  void execute(Exec& e, const sm::StepOutput& out);
  void apply_primitive(Exec& e, const mdl::PrimitiveDef& p);
  void conclude(Exec& e);
  void sync_timer(Exec& e);
  void run_policy(Exec& e, bool accept);

  void enter_step(std::size_t index);
  void pme_check();
  bool start_negotiated(const mdl::MdlDocument& doc, const ActionId& action, const Message& m);

  void do_upi(const Exec& e);
  void do_btl();
  void do_bpl();
  void do_bpf(const Exec& e);
  void do_bfv();

  PayloadValue resolve(const mdl::ParamValue& p, const Exec& e) const;
  VehicleId resolve_vehicle(const mdl::ParamValue& p, const Exec& e) const;
  double resolve_double(const mdl::ParamValue& p, const Exec& e) const;

  void warn(const std::string& message);
  void trace_result(const Exec& e, const std::string& label);
  void reply_nack(const Message& m);

  VehicleId id_;
  IdleState idle_;
  PlatoonInfo platoon_;
  std::optional<PlatoonInfo> parent_platoon_;  // snapshot taken by BTL
  const mdl::CompiledBehaviour* behaviour_;
  World* world_;
  const RuntimeConfig* config_;

  std::optional<Exec> reactive_;
  std::optional<Pme> pme_;
  std::uint64_t next_seq_ = 1;
  std::uint64_t idle_seq_ = 0;  // timer guarding a waiting idle state
};

}  // namespace sead::rt
