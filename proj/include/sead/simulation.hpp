#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sead/core.hpp"
#include "sead/mdl.hpp"
#include "sead/runtime.hpp"

// Deterministic multi-vehicle simulation: a fixed-step engine drives message
// latency, timers, longitudinal kinematics and lane changes, and feeds the
// per-vehicle agents through the runtime World interface. Identical inputs
// (scenario, seed, injections) produce byte-identical traces.

namespace sead::sim {

struct SimConfig {
  double dt_s = 0.1;
  double latency_s = 0.1;     // one-way V2V delay
  double drop_rate = 0.0;     // per-receiver Bernoulli loss
  double d_m = 6.0;           // intra-platoon gap
  double big_d_m = 30.0;      // gap to anything outside the platoon
  double v_free_ms = 20.0;
  double a_max = 2.0;
  double b_max = 3.0;
  double arrive_pos_tol_m = 0.5;
  double arrive_vel_tol = 0.5;
  double min_gap_m = 2.0;      // hard safety floor, never crossed
  double lane_change_gap_m = 4.0;
  double sample_every_s = 1.0;
  double t_max_s = 600.0;
  int max_platoon_size = 8;
  double default_timeout_s = 30.0;
  double idle_timeout_s = 120.0;
};

// Overlay JSON fields (same snake_case names) onto a config.
SimConfig config_from_json(const nlohmann::json& j, SimConfig base = {});

struct VehicleInit {
  VehicleId id;
  double s = 0.0;
  int lane = 0;
  double v = 20.0;
  std::optional<IdleState> idle;  // defaulted by platoon membership
};

struct Obstacle {
  int lane = 0;
  double s = 0.0;
};

struct ScriptEvent {
  double t = 0.0;
  std::string kind;  // initiate | request | split_order | set_headway
  VehicleId vehicle;
  ActionId action;
  VehicleId to;
  std::map<std::string, VehicleId> bindings;
  std::map<std::string, PayloadValue> args;
  std::optional<double> th_s;     // set_headway
  std::optional<double> space_m;  // set_headway
};

// Drop the n-th sent message matching kind(+action) — single-fault injection.
struct DropRule {
  MessageKind kind = MessageKind::REQ;
  std::optional<ActionId> action;
  int occurrence = 1;  // 1-based over matching sends
};

struct PlatoonSpec {
  std::vector<VehicleId> members;        // ordered, leader first
  std::map<VehicleId, double> spaces;    // follower → held gap (default d_m)
  std::optional<double> th_s;            // platoon headway policy
};

struct Scenario {
  std::string name;
  SimConfig config;
  std::vector<VehicleInit> vehicles;
  std::vector<PlatoonSpec> platoons;
  std::vector<Obstacle> obstacles;
  std::vector<ScriptEvent> script;
  double min_t_s = 0.0;  // run at least this long before calling it done
};

// The scenario's own "config" section overlays base_config, so ambient
// configuration never overrides values a scenario pins.
Scenario scenario_from_json(const nlohmann::json& j, SimConfig base_config = {});
Scenario load_scenario(const std::string& file_path, SimConfig base_config = {});

struct Summary {
  nlohmann::json json;     // protocol summary (messages, results, final states)
  bool quiescent = false;  // everyone settled in a stable idle state
  double t_end = 0.0;
};

class Simulation {
 public:
  Simulation(Scenario scenario, const mdl::CompiledBehaviour* behaviour,
             std::uint64_t seed = 0, std::vector<DropRule> drops = {});
  ~Simulation();

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  // Runs to quiescence (or t_max). Writes one JSON object per line when a
  // trace sink is given.
  Summary run(std::ostream* trace_out = nullptr);

  const rt::Agent& agent(const VehicleId& id) const;
  double position(const VehicleId& id) const;
  double speed(const VehicleId& id) const;
  int lane(const VehicleId& id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sead::sim
