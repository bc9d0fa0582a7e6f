#include "sead/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace sead::sim {

namespace {

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

PayloadValue payload_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_string()) return j.get<std::string>();
  throw DomainError(where + ": unsupported argument value " + j.dump());
}

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                  const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known)
      if (k == n) ok = true;
    if (!ok) throw DomainError(where + ": unknown field \"" + k + "\"");
  }
}

}  // namespace

SimConfig config_from_json(const nlohmann::json& j, SimConfig base) {
  require_keys(j,
               {"dt_s", "latency_s", "drop_rate", "d_m", "big_d_m", "v_free_ms", "a_max", "b_max",
                "arrive_pos_tol_m", "arrive_vel_tol", "min_gap_m", "lane_change_gap_m",
                "sample_every_s", "t_max_s", "max_platoon_size", "default_timeout_s",
                "idle_timeout_s"},
               "config");
  auto num = [&](const char* k, double& into) {
    if (j.contains(k)) into = j.at(k).get<double>();
  };
  num("dt_s", base.dt_s);
  num("latency_s", base.latency_s);
  num("drop_rate", base.drop_rate);
  num("d_m", base.d_m);
  num("big_d_m", base.big_d_m);
  num("v_free_ms", base.v_free_ms);
  num("a_max", base.a_max);
  num("b_max", base.b_max);
  num("arrive_pos_tol_m", base.arrive_pos_tol_m);
  num("arrive_vel_tol", base.arrive_vel_tol);
  num("min_gap_m", base.min_gap_m);
  num("lane_change_gap_m", base.lane_change_gap_m);
  num("sample_every_s", base.sample_every_s);
  num("t_max_s", base.t_max_s);
  num("default_timeout_s", base.default_timeout_s);
  num("idle_timeout_s", base.idle_timeout_s);
  if (j.contains("max_platoon_size")) base.max_platoon_size = j.at("max_platoon_size").get<int>();
  if (base.dt_s <= 0.0) throw DomainError("config: dt_s must be positive");
  return base;
}

Scenario scenario_from_json(const nlohmann::json& j, SimConfig base_config) {
  require_keys(j, {"name", "config", "vehicles", "platoons", "obstacles", "script", "min_t_s"},
               "scenario");
  Scenario sc;
  sc.name = j.at("name").get<std::string>();
  sc.config = base_config;
  if (j.contains("config")) sc.config = config_from_json(j.at("config"), base_config);
  sc.min_t_s = j.value("min_t_s", 0.0);

  static const nlohmann::json empty_array = nlohmann::json::array();
  static const nlohmann::json empty_object = nlohmann::json::object();
  auto section = [&](const char* key, const nlohmann::json& fallback) -> const nlohmann::json& {
    return j.contains(key) ? j.at(key) : fallback;
  };

  for (const auto& v : section("vehicles", empty_array)) {
    require_keys(v, {"id", "s", "lane", "v", "idle"}, "vehicle");
    VehicleInit vi;
    vi.id = v.at("id").get<std::string>();
    vi.s = v.value("s", 0.0);
    vi.lane = v.value("lane", 0);
    vi.v = v.value("v", sc.config.v_free_ms);
    if (v.contains("idle")) {
      auto idle = idle_state_from(v.at("idle").get<std::string>());
      if (!idle) throw DomainError("vehicle " + vi.id + ": unknown idle state");
      vi.idle = *idle;
    }
    sc.vehicles.push_back(std::move(vi));
  }

  for (const auto& p : section("platoons", empty_array)) {
    PlatoonSpec spec;
    if (p.is_array()) {
      spec.members = p.get<std::vector<VehicleId>>();
    } else {
      require_keys(p, {"members", "spaces", "th_s"}, "platoon");
      spec.members = p.at("members").get<std::vector<VehicleId>>();
      if (p.contains("spaces"))
        for (const auto& [k, v] : p.at("spaces").items()) spec.spaces[k] = v.get<double>();
      if (p.contains("th_s")) spec.th_s = p.at("th_s").get<double>();
    }
    if (spec.members.empty()) throw DomainError("platoon: empty member list");
    sc.platoons.push_back(std::move(spec));
  }

  for (const auto& o : section("obstacles", empty_array)) {
    require_keys(o, {"lane", "s"}, "obstacle");
    sc.obstacles.push_back({o.value("lane", 0), o.at("s").get<double>()});
  }

  for (const auto& e : section("script", empty_array)) {
    require_keys(e, {"t", "do", "vehicle", "action", "to", "bindings", "args", "th_s", "space_m"},
                 "script");
    ScriptEvent ev;
    ev.t = e.at("t").get<double>();
    ev.kind = e.at("do").get<std::string>();
    ev.vehicle = e.at("vehicle").get<std::string>();
    ev.action = e.value("action", "");
    ev.to = e.value("to", "");
    if (e.contains("bindings"))
      for (const auto& [k, v] : e.at("bindings").items()) ev.bindings[k] = v.get<std::string>();
    if (e.contains("args"))
      for (const auto& [k, v] : e.at("args").items())
        ev.args[k] = payload_from_json(v, "script args");
    if (e.contains("th_s")) ev.th_s = e.at("th_s").get<double>();
    if (e.contains("space_m")) ev.space_m = e.at("space_m").get<double>();
    static const std::set<std::string> kinds{"initiate", "request", "split_order", "set_headway"};
    if (!kinds.count(ev.kind)) throw DomainError("script: unknown action \"" + ev.kind + "\"");
    sc.script.push_back(std::move(ev));
  }
  return sc;
}

Scenario load_scenario(const std::string& file_path, SimConfig base_config) {
  std::ifstream in(file_path);
  if (!in) throw DomainError("cannot open scenario " + file_path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(file_path + ": " + e.what());
  }
  try {
    return scenario_from_json(j, base_config);
  } catch (const DomainError& e) {
    throw DomainError(file_path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct Simulation::Impl final : rt::World {
  Scenario sc;
  const mdl::CompiledBehaviour* behaviour;
  std::uint64_t seed;
  std::vector<DropRule> drops;
  std::vector<int> drop_seen;

  struct Veh {
    std::unique_ptr<rt::Agent> agent;
    double s = 0.0;
    double v = 0.0;
    int lane = 0;
    double cruise_v = 20.0;
    std::optional<rt::MoveDirective> move;
    int move_lane = 0;   // frozen at set_move time
    bool move_armed = false;
    std::optional<rt::HeadwayDirective> hw;
    bool hw_armed = false;
  };
  std::vector<VehicleId> order;
  std::map<VehicleId, Veh> vehicles;

  struct Delivery {
    Message m;
    VehicleId to;
    double at;
    std::uint64_t seq;
  };
  std::vector<Delivery> inflight;
  std::uint64_t delivery_seq = 0;
  std::map<std::pair<VehicleId, std::uint64_t>, double> timers;
  CorrelationId next_corr = 100;
  double now = 0.0;
  std::mt19937_64 rng;
  std::ostream* sink = nullptr;
  rt::RuntimeConfig rt_cfg;

  // summary accumulators
  std::vector<std::string> msg_lines;
  std::vector<std::string> result_lines;
  std::vector<std::string> step_lines;
  std::vector<std::string> manoeuvre_lines;
  int warning_count = 0;
  double min_same_lane_gap = 1e9;
  int arrival_events = 0;

  // one row per scripted manoeuvre launch, for the run summary table
  struct InstanceRow {
    VehicleId vehicle;
    ActionId action;
    double t_start = 0.0;
    std::size_t msg0 = 0;
    bool open = true;
    std::string labels;
    double t_end = 0.0;
    std::size_t msgs = 0;
    std::string cand_labels;  // requester-side conclusion, used if nothing better
    double cand_t = 0.0;
    bool has_cand = false;
  };
  std::vector<InstanceRow> rows;

  // --- rt::World -----------------------------------------------------------

  double now_s() const override { return now; }
  CorrelationId fresh_correlation() override { return ++next_corr; }

  void send(Message m) override {
    if (auto bad = message_violation(m)) {
      trace({"warning", {{"vehicle", m.from}, {"message", "refusing to send: " + *bad}}});
      return;
    }
    bool injected = false;
    for (std::size_t i = 0; i < drops.size(); ++i) {
      const DropRule& r = drops[i];
      if (r.kind != m.kind) continue;
      if (r.action && *r.action != m.action) continue;
      if (++drop_seen[i] == r.occurrence) injected = true;
    }
    trace({"msg-sent",
           {{"kind", to_string(m.kind)},
            {"action", m.action},
            {"from", m.from},
            {"to", m.to},
            {"correlation", m.correlation}}});
    for (const auto& r : m.to) {
      bool lost = injected;
      std::string reason = "injected";
      if (!lost && sc.config.drop_rate > 0.0) {
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < sc.config.drop_rate) {
          lost = true;
          reason = "lossy";
        }
      }
      if (!lost && !vehicles.count(r)) {
        lost = true;
        reason = "unknown receiver";
      }
      std::string line = to_string(m.kind) + "/" + m.action + " " + m.from + "->" + r;
      if (lost) {
        line += " dropped";
        trace({"msg-dropped",
               {{"kind", to_string(m.kind)},
                {"action", m.action},
                {"from", m.from},
                {"to", r},
                {"correlation", m.correlation},
                {"reason", reason}}});
      } else {
        inflight.push_back({m, r, now + sc.config.latency_s, ++delivery_seq});
      }
      msg_lines.push_back(std::move(line));
    }
  }

  void arm_timer(const VehicleId& owner, std::uint64_t seq, double deadline_s) override {
    timers[{owner, seq}] = now + deadline_s;
  }
  void cancel_timer(const VehicleId& owner, std::uint64_t seq) override {
    timers.erase({owner, seq});
  }
  void set_headway(const VehicleId& v, const rt::HeadwayDirective& d) override {
    Veh& veh = vehicles.at(v);
    veh.hw = d;
    veh.hw_armed = true;
  }
  void set_move(const VehicleId& v, const rt::MoveDirective& d) override {
    Veh& veh = vehicles.at(v);
    veh.move = d;
    veh.move_armed = true;
    auto anchor = vehicles.find(d.target);
    int base = anchor == vehicles.end() ? veh.lane : anchor->second.lane;
    veh.move_lane = base + static_cast<int>(std::lround(d.lane_offset));
  }
  void clear_move(const VehicleId& v) override {
    Veh& veh = vehicles.at(v);
    veh.move.reset();
    veh.move_armed = false;
  }
  void clear_motion(const VehicleId& v) override {
    Veh& veh = vehicles.at(v);
    veh.move.reset();
    veh.move_armed = false;
    veh.hw.reset();
    veh.hw_armed = false;
  }
  std::optional<rt::Peek> peek(const VehicleId& v) const override {
    auto it = vehicles.find(v);
    if (it == vehicles.end()) return std::nullopt;
    return rt::Peek{it->second.agent->idle(), it->second.agent->platoon()};
  }
  void adopt_platoon(const VehicleId& member, const rt::PlatoonInfo& p) override {
    auto it = vehicles.find(member);
    if (it != vehicles.end()) it->second.agent->set_platoon(p);
  }

  void trace(rt::TraceEvent e) override {
    if (e.kind == "warning") ++warning_count;
    if (e.kind == "result") {
      const std::string scope = e.fields.value("scope", "");
      if (scope == "instance") {
        result_lines.push_back(e.fields.value("vehicle", "") + " " + e.fields.value("action", "") +
                               " " + e.fields.value("role", "") + "=" +
                               e.fields.value("label", "") + "(" + e.fields.value("final", "") +
                               ")");
        for (auto& r : rows)
          if (r.open && r.vehicle == e.fields.value("vehicle", "") &&
              r.action == e.fields.value("action", "")) {
            r.cand_labels = e.fields.value("label", "");
            r.cand_t = now;
            r.has_cand = true;
            break;
          }
      } else {
        std::string labels;
        for (const auto& l : e.fields.value("labels", std::vector<std::string>{})) {
          if (!labels.empty()) labels += ",";
          labels += l;
        }
        if (scope == "step") {
          step_lines.push_back(e.fields.value("vehicle", "") + " " + e.fields.value("action", "") +
                               " " + e.fields.value("step", "") + " [" + labels + "]");
        } else {
          manoeuvre_lines.push_back(e.fields.value("vehicle", "") + " " +
                                    e.fields.value("action", "") + " [" + labels + "]");
          for (auto& r : rows)
            if (r.open && r.action == e.fields.value("action", "")) {
              r.labels = labels;
              r.t_end = now;
              r.msgs = msg_lines.size() - r.msg0;
              r.open = false;
              break;
            }
        }
      }
    }
    if (!sink) return;
    nlohmann::json j = std::move(e.fields);
    j["kind"] = e.kind;
    j["t"] = round3(now);
    *sink << j.dump() << "\n";
  }

  // --- construction ----------------------------------------------------------

  Impl(Scenario scenario, const mdl::CompiledBehaviour* b, std::uint64_t sd,
       std::vector<DropRule> dr)
      : sc(std::move(scenario)), behaviour(b), seed(sd), drops(std::move(dr)), rng(sd) {
    drop_seen.assign(drops.size(), 0);
    rt_cfg.max_platoon_size = sc.config.max_platoon_size;
    rt_cfg.default_timeout_s = sc.config.default_timeout_s;
    rt_cfg.idle_timeout_s = sc.config.idle_timeout_s;

    std::map<VehicleId, IdleState> idles;
    std::map<VehicleId, rt::PlatoonInfo> views;
    for (const auto& p : sc.platoons) {
      rt::PlatoonInfo info;
      info.leader = p.members.front();
      info.members = p.members;
      info.d = sc.config.d_m;
      info.D = sc.config.big_d_m;
      info.th_s = p.th_s;
      for (std::size_t i = 0; i < p.members.size(); ++i) {
        idles[p.members[i]] = i == 0 ? IdleState::PL : IdleState::PF;
        views[p.members[i]] = info;
      }
    }

    for (const auto& vi : sc.vehicles) {
      Veh veh;
      veh.s = vi.s;
      veh.lane = vi.lane;
      veh.v = vi.v;
      veh.cruise_v = vi.v;
      IdleState idle = vi.idle ? *vi.idle
                               : (idles.count(vi.id) ? idles[vi.id] : IdleState::FV);
      rt::PlatoonInfo view = views.count(vi.id) ? views[vi.id] : rt::solo_platoon(vi.id);
      if (!views.count(vi.id)) {
        view.d = sc.config.d_m;
        view.D = sc.config.big_d_m;
      }
      veh.agent = std::make_unique<rt::Agent>(vi.id, idle, view, behaviour, this, &rt_cfg);
      order.push_back(vi.id);
      vehicles.emplace(vi.id, std::move(veh));
    }
    for (const auto& p : sc.platoons)
      for (std::size_t i = 1; i < p.members.size(); ++i) {
        if (!vehicles.count(p.members[i]) || !vehicles.count(p.members[i - 1]))
          throw DomainError("platoon member without a vehicle entry");
        rt::HeadwayDirective d;
        d.ahead = p.members[i - 1];
        auto sp = p.spaces.find(p.members[i]);
        if (p.th_s && sp == p.spaces.end()) d.th_s = *p.th_s;
        else d.space_m = sp == p.spaces.end() ? sc.config.d_m : sp->second;
        set_headway(p.members[i], d);
      }
  }

  // --- script ----------------------------------------------------------------

  void apply(const ScriptEvent& ev) {
    trace({"script", {{"do", ev.kind}, {"vehicle", ev.vehicle}, {"action", ev.action}}});
    auto it = vehicles.find(ev.vehicle);
    if (it == vehicles.end()) throw DomainError("script: unknown vehicle " + ev.vehicle);
    rt::Agent& agent = *it->second.agent;
    if (ev.kind == "initiate" || ev.kind == "request")
      rows.push_back({ev.vehicle, ev.action, now, msg_lines.size(), true, "", 0.0, 0, "", 0.0,
                      false});
    if (ev.kind == "initiate") {
      agent.initiate(ev.action, ev.bindings, ev.args);
    } else if (ev.kind == "request") {
      agent.request(ev.action, ev.to, ev.args);
    } else if (ev.kind == "split_order") {
      agent.send_tmpl_split(ev.to);
    } else if (ev.kind == "set_headway") {
      rt::HeadwayDirective d;
      d.ahead = ev.to;
      d.th_s = ev.th_s;
      d.space_m = ev.space_m;
      set_headway(ev.vehicle, d);
    }
  }

  // --- physics -----------------------------------------------------------------

  struct Snap {
    double s, v;
    int lane;
  };

  std::optional<Snap> ahead_of(const std::map<VehicleId, Snap>& snap,
                               const VehicleId& self) const {
    // nearest same-lane entity in front (vehicles and obstacles)
    const Snap& me = snap.at(self);
    std::optional<Snap> best;
    for (const auto& [id, sn] : snap) {
      if (id == self || sn.lane != me.lane || sn.s <= me.s) continue;
      if (!best || sn.s < best->s) best = sn;
    }
    for (const auto& o : sc.obstacles) {
      if (o.lane != me.lane || o.s <= me.s) continue;
      if (!best || o.s < best->s) best = Snap{o.s, 0.0, o.lane};
    }
    return best;
  }

  void physics() {
    const SimConfig& c = sc.config;
    std::map<VehicleId, Snap> snap;
    for (const auto& id : order) {
      const Veh& v = vehicles.at(id);
      snap[id] = {v.s, v.v, v.lane};
    }

    // lane changes: aligned with the slot and both target-lane gaps open
    for (const auto& id : order) {
      Veh& veh = vehicles.at(id);
      if (!veh.move || veh.move_lane == veh.lane) continue;
      auto anchor = snap.find(veh.move->target);
      if (anchor == snap.end()) continue;
      double err = anchor->second.s + veh.move->offset_m - veh.s;
      if (std::abs(err) > 2.0 * c.arrive_pos_tol_m) continue;
      bool open = true;
      for (const auto& [oid, sn] : snap) {
        if (oid == id || sn.lane != veh.move_lane) continue;
        double gap = sn.s > veh.s ? sn.s - veh.s : veh.s - sn.s;
        if (gap < c.lane_change_gap_m) open = false;
      }
      for (const auto& o : sc.obstacles)
        if (o.lane == veh.move_lane && std::abs(o.s - veh.s) < c.lane_change_gap_m) open = false;
      if (open) {
        veh.lane = veh.move_lane;
        snap[id].lane = veh.lane;
        trace({"lane-change", {{"vehicle", id}, {"lane", veh.lane}}});
      }
    }

    std::map<VehicleId, std::pair<double, double>> next;  // id → (s, v)
    for (const auto& id : order) {
      const Veh& veh = vehicles.at(id);
      const Snap& me = snap.at(id);
      double a;
      if (veh.move) {
        auto anchor = snap.find(veh.move->target);
        double as = anchor == snap.end() ? me.s : anchor->second.s;
        double av = anchor == snap.end() ? me.v : anchor->second.v;
        double err = as + veh.move->offset_m - me.s;
        double v_des = av + clamp(0.5 * err, -5.0, 5.0);
        a = clamp(v_des - me.v, -c.b_max, c.a_max);
      } else if (veh.hw) {
        auto pred = snap.find(veh.hw->ahead);
        if (pred == snap.end()) {
          a = clamp(veh.cruise_v - me.v, -c.b_max, c.a_max);
        } else {
          double g = pred->second.s - me.s;
          double target = veh.hw->th_s ? *veh.hw->th_s * me.v : *veh.hw->space_m;
          a = clamp(0.25 * (g - target) + 1.2 * (pred->second.v - me.v), -c.b_max, c.a_max);
        }
      } else {
        a = clamp(veh.cruise_v - me.v, -c.b_max, c.a_max);
      }

      double v_next = std::max(0.0, me.v + a * c.dt_s);
      if (auto pred = ahead_of(snap, id)) {
        double g = pred->s - me.s;
        double v_allow = std::max(0.0, pred->v + (g - c.min_gap_m) / c.dt_s);
        v_next = std::min(v_next, v_allow);
      }
      next[id] = {me.s + v_next * c.dt_s, v_next};
    }
    for (const auto& id : order) {
      Veh& veh = vehicles.at(id);
      veh.s = next[id].first;
      veh.v = next[id].second;
    }

    // same-lane separation audit: order by pre-step position so a vehicle
    // driving through its predecessor (or an obstacle) shows up negative
    std::map<int, std::vector<std::pair<double, double>>> by_lane;  // (s_prev, s_next)
    for (const auto& id : order) {
      const Veh& veh = vehicles.at(id);
      by_lane[veh.lane].push_back({snap.at(id).s, veh.s});
    }
    for (const auto& o : sc.obstacles) by_lane[o.lane].push_back({o.s, o.s});
    for (auto& [lane, ss] : by_lane) {
      std::sort(ss.begin(), ss.end());
      for (std::size_t i = 1; i < ss.size(); ++i)
        min_same_lane_gap = std::min(min_same_lane_gap, ss[i].second - ss[i - 1].second);
    }
  }

  void arrivals() {
    const SimConfig& c = sc.config;
    for (const auto& id : order) {
      Veh& veh = vehicles.at(id);
      if (veh.move_armed && veh.move) {
        auto anchor = vehicles.find(veh.move->target);
        double as = anchor == vehicles.end() ? veh.s : anchor->second.s;
        double av = anchor == vehicles.end() ? veh.v : anchor->second.v;
        double err = as + veh.move->offset_m - veh.s;
        if (veh.lane == veh.move_lane && std::abs(err) <= c.arrive_pos_tol_m &&
            std::abs(veh.v - av) <= c.arrive_vel_tol) {
          veh.move_armed = false;
          ++arrival_events;
          trace({"arrived", {{"vehicle", id}, {"mode", "move"}}});
          veh.agent->on_arrived();
          continue;
        }
      }
      if (veh.hw_armed && veh.hw) {
        auto pred = vehicles.find(veh.hw->ahead);
        if (pred == vehicles.end()) continue;
        double g = pred->second.s - veh.s;
        double target = veh.hw->th_s ? *veh.hw->th_s * veh.v : *veh.hw->space_m;
        if (std::abs(g - target) <= c.arrive_pos_tol_m &&
            std::abs(veh.v - pred->second.v) <= c.arrive_vel_tol) {
          veh.hw_armed = false;
          ++arrival_events;
          trace({"arrived", {{"vehicle", id}, {"mode", "headway"}}});
          veh.agent->on_arrived();
        }
      }
    }
  }

  // --- run -----------------------------------------------------------------------

  Summary run(std::ostream* trace_out) {
    sink = trace_out;
    const SimConfig& c = sc.config;
    std::stable_sort(sc.script.begin(), sc.script.end(),
                     [](const ScriptEvent& a, const ScriptEvent& b) { return a.t < b.t; });
    {
      nlohmann::json inj = nlohmann::json::array();
      for (const auto& d : drops)
        inj.push_back(std::string(to_string(d.kind)) + "/" + (d.action ? *d.action : "*") + "#" +
                      std::to_string(d.occurrence));
      trace({"scenario", {{"name", sc.name}, {"seed", seed}, {"drops", inj}}});
    }

    const long dt_ms = std::lround(c.dt_s * 1000.0);
    const long ticks = std::lround(c.t_max_s * 1000.0) / dt_ms;
    const long sample_every = std::max<long>(1, std::lround(c.sample_every_s * 1000.0) / dt_ms);
    std::size_t script_i = 0;
    bool quiescent = false;

    for (long k = 0; k <= ticks; ++k) {
      now = static_cast<double>(k * dt_ms) / 1000.0;

      while (script_i < sc.script.size() && sc.script[script_i].t <= now + 1e-9)
        apply(sc.script[script_i++]);

      for (int wave = 0; wave < 100; ++wave) {
        std::vector<Delivery> due;
        auto split = std::stable_partition(inflight.begin(), inflight.end(),
                                           [&](const Delivery& d) { return d.at > now + 1e-9; });
        due.assign(std::make_move_iterator(split), std::make_move_iterator(inflight.end()));
        inflight.erase(split, inflight.end());
        if (due.empty()) break;
        std::sort(due.begin(), due.end(), [](const Delivery& a, const Delivery& b) {
          return a.at != b.at ? a.at < b.at : a.seq < b.seq;
        });
        for (auto& d : due) {
          trace({"msg-delivered",
                 {{"kind", to_string(d.m.kind)},
                  {"action", d.m.action},
                  {"from", d.m.from},
                  {"to", d.to},
                  {"correlation", d.m.correlation}}});
          vehicles.at(d.to).agent->on_message(d.m);
        }
        if (c.latency_s > 1e-9) break;  // new sends land on later ticks
      }

      {
        std::vector<std::pair<std::pair<VehicleId, std::uint64_t>, double>> due;
        for (const auto& [key, deadline] : timers)
          if (deadline <= now + 1e-9) due.push_back({key, deadline});
        std::sort(due.begin(), due.end(), [](const auto& a, const auto& b) {
          return a.second != b.second ? a.second < b.second : a.first < b.first;
        });
        for (const auto& [key, deadline] : due) {
          if (!timers.count(key)) continue;  // cancelled by an earlier handler
          timers.erase(key);
          trace({"timer", {{"vehicle", key.first}, {"seq", key.second}}});
          vehicles.at(key.first).agent->on_timer(key.second);
        }
      }

      physics();
      arrivals();

      if (k % sample_every == 0 && sink) {
        for (const auto& id : order) {
          const Veh& veh = vehicles.at(id);
          trace({"sample",
                 {{"vehicle", id},
                  {"s", round3(veh.s)},
                  {"v", round3(veh.v)},
                  {"lane", veh.lane},
                  {"idle", to_string(veh.agent->idle())}}});
        }
      }

      bool settled = script_i == sc.script.size() && inflight.empty();
      if (settled)
        for (const auto& id : order) {
          const Veh& veh = vehicles.at(id);
          if (veh.agent->busy() || !is_stable(veh.agent->idle())) settled = false;
        }
      if (settled && now + 1e-9 >= sc.min_t_s) {
        quiescent = true;
        break;
      }
    }

    trace({"end", {{"quiescent", quiescent}}});

    nlohmann::json instances = nlohmann::json::array();
    for (auto& r : rows) {
      if (r.open) {
        r.labels = r.has_cand ? r.cand_labels : "";
        r.t_end = r.has_cand ? r.cand_t : now;
        r.msgs = msg_lines.size() - r.msg0;
      }
      instances.push_back({{"vehicle", r.vehicle},
                           {"action", r.action},
                           {"result", r.labels},
                           {"duration_s", round3(r.t_end - r.t_start)},
                           {"messages", r.msgs}});
    }

    nlohmann::json final_states = nlohmann::json::object();
    for (const auto& id : order) {
      const Veh& veh = vehicles.at(id);
      final_states[id] = {{"idle", to_string(veh.agent->idle())},
                          {"leader", veh.agent->platoon().leader},
                          {"members", veh.agent->platoon().members},
                          {"lane", veh.lane}};
    }
    Summary out;
    out.quiescent = quiescent;
    out.t_end = round3(now);
    out.json = {{"name", sc.name},
                {"seed", seed},
                {"quiescent", quiescent},
                {"t_end", round3(now)},
                {"messages", msg_lines},
                {"results", result_lines},
                {"steps", step_lines},
                {"manoeuvres", manoeuvre_lines},
                {"instances", instances},
                {"warnings", warning_count},
                {"final", final_states},
                {"min_same_lane_gap", min_same_lane_gap > 1e8 ? nlohmann::json()
                                                              : nlohmann::json(round3(min_same_lane_gap))}};
    return out;
  }
};

Simulation::Simulation(Scenario scenario, const mdl::CompiledBehaviour* behaviour,
                       std::uint64_t seed, std::vector<DropRule> drops)
    : impl_(std::make_unique<Impl>(std::move(scenario), behaviour, seed, std::move(drops))) {}

Simulation::~Simulation() = default;

Summary Simulation::run(std::ostream* trace_out) { return impl_->run(trace_out); }

const rt::Agent& Simulation::agent(const VehicleId& id) const {
  return *impl_->vehicles.at(id).agent;
}
double Simulation::position(const VehicleId& id) const { return impl_->vehicles.at(id).s; }
double Simulation::speed(const VehicleId& id) const { return impl_->vehicles.at(id).v; }
int Simulation::lane(const VehicleId& id) const { return impl_->vehicles.at(id).lane; }

}  // namespace sead::sim
