#include <json.hpp>

#include "sead/mdl.hpp"

namespace sead::mdl {
namespace {

using nlohmann::json;

json param_json(const ParamValue& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) {
          return x;
        } else if constexpr (std::is_same_v<T, bool>) {
          return x;
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, ArgRef>) {
          json j{{"$arg", x.key}};
          if (x.scale != 1.0) j["scale"] = x.scale;
          return j;
        } else if constexpr (std::is_same_v<T, PayloadRef>) {
          json j{{"$payload", x.key}};
          if (x.scale != 1.0) j["scale"] = x.scale;
          return j;
        } else if constexpr (std::is_same_v<T, PlatoonRef>) {
          json j{{"$platoon", x.field}};
          if (x.scale != 1.0) j["scale"] = x.scale;
          return j;
        } else {  // VehicleRef
          switch (x.kind) {
            case VehicleRef::Kind::Role:
              return json{{"$vehicle", {{"role", x.name}}}};
            case VehicleRef::Kind::PlatoonAnchor:
              return json{{"$vehicle", {{"platoon", x.name}}}};
            case VehicleRef::Kind::PredecessorOf:
              return json{{"$vehicle", {{"predecessor_of", x.name}}}};
          }
          return json();
        }
      },
      v);
}

json param_map_json(const std::map<std::string, ParamValue>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = param_json(v);
  return j;
}

json pattern_json(const EventPattern& p) {
  switch (p.kind) {
    case EventPattern::Kind::Msg: {
      std::string spec = to_string(*p.msg_kind);
      if (p.msg_action) spec += "/" + *p.msg_action;
      return json{{"msg", spec}};
    }
    case EventPattern::Kind::Timeout:
      if (p.timeout_s) return json{{"timeout", *p.timeout_s}};
      return json{{"timeout", true}};
    case EventPattern::Kind::Arrived:
      return json{{"arrived", true}};
    case EventPattern::Kind::Done:
      return json{{"done", true}};
    case EventPattern::Kind::Policy:
      return json{{"policy", p.policy_accept ? "accept" : "reject"}};
  }
  return json();
}

json primitive_json(const PrimitiveDef& p) {
  json j{{"op", to_string(p.op)}};
  switch (p.op) {
    case PrimitiveOp::MTP:
      j["target"] = param_json(*p.target);
      if (p.offset_m) j["offset_m"] = param_json(*p.offset_m);
      if (p.lane_offset) j["lane_offset"] = param_json(*p.lane_offset);
      break;
    case PrimitiveOp::SH:
      if (p.th_s) j["th_s"] = param_json(*p.th_s);
      if (p.space_m) j["space_m"] = param_json(*p.space_m);
      if (p.ahead) j["ahead"] = param_json(*p.ahead);
      break;
    case PrimitiveOp::W:
      if (p.timeout_s) j["timeout_s"] = *p.timeout_s;
      if (p.wait_for) j["for"] = pattern_json(*p.wait_for);
      break;
    case PrimitiveOp::SND: {
      const SndTemplate& t = *p.msg;
      json m{{"kind", to_string(t.kind)}, {"to", {{"role", t.to_role}}}};
      if (t.action) m["action"] = *t.action;
      if (t.forward_args) {
        m["payload"] = json{{"$forward", "args"}};
      } else if (!t.payload.empty()) {
        m["payload"] = param_map_json(t.payload);
      }
      j["msg"] = std::move(m);
      break;
    }
    default:
      break;
  }
  return j;
}

json transition_json(const TransitionDef& t) {
  json to = t.to_result ? json{{"result", t.to}} : json(t.to);
  return json{{"on", pattern_json(t.on)}, {"to", std::move(to)}};
}

json state_json(const StateDef& s) {
  json j = json::object();
  if (!s.primitives.empty()) {
    json prims = json::array();
    for (const auto& p : s.primitives) prims.push_back(primitive_json(p));
    j["primitives"] = std::move(prims);
  }
  if (!s.transitions.empty()) {
    json ts = json::array();
    for (const auto& t : s.transitions) ts.push_back(transition_json(t));
    j["transitions"] = std::move(ts);
  }
  return j;
}

json role_json(const RoleDef& r, MdlDocument::Kind kind) {
  json j{{"name", r.name}, {"entry_state", to_string(r.entry_state)}};
  if (kind == MdlDocument::Kind::SubManoeuvre) {
    bool controlling = r.part == RoleDef::Part::Controlling;
    j["part"] = controlling ? "controlling" : "reactive";
    j["start"] = r.start;
    RoleDef::Init default_init = controlling ? RoleDef::Init::Direct : RoleDef::Init::Message;
    if (r.init != default_init) {
      j["init"] = r.init == RoleDef::Init::Direct ? "direct" : "message";
    }
  }
  return j;
}

json result_json(const ResultDef& r) {
  json fin = json::object();
  for (const auto& [role, idle] : r.final_states) fin[role] = to_string(idle);
  return json{{"label", r.label}, {"final", std::move(fin)}};
}

json bindings_json(const std::map<std::string, std::string>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

json invocation_json(const StepInvocation& inv) {
  json j{{"action", inv.action}};
  if (!inv.participants.empty()) j["participants"] = bindings_json(inv.participants);
  if (!inv.args.empty()) j["args"] = param_map_json(inv.args);
  return j;
}

json step_json(const StepDef& s) {
  json j{{"id", s.id}};
  if (s.sim) {
    json arr = json::array();
    for (const auto& inv : s.invoke) arr.push_back(invocation_json(inv));
    j["invoke"] = json{{"sim", std::move(arr)}};
  } else {
    const StepInvocation& inv = s.invoke.front();
    j["invoke"] = inv.action;
    if (!inv.participants.empty()) j["participants"] = bindings_json(inv.participants);
    if (!inv.args.empty()) j["args"] = param_map_json(inv.args);
  }
  json next = json::array();
  for (const auto& n : s.next) {
    json on = n.on.size() == 1 ? json(n.on.front()) : json(n.on);
    next.push_back(json{{"on", std::move(on)}, {"to", n.to}});
  }
  j["next"] = std::move(next);
  return j;
}

}  // namespace

std::string serialize_document(const MdlDocument& doc) {
  json j{{"mdl-version", doc.version},
         {"id", doc.id},
         {"kind", doc.kind == MdlDocument::Kind::SubManoeuvre ? "sub-manoeuvre" : "manoeuvre"}};
  json roles = json::array();
  for (const auto& r : doc.roles) roles.push_back(role_json(r, doc.kind));
  j["roles"] = std::move(roles);

  if (doc.kind == MdlDocument::Kind::SubManoeuvre) {
    if (!doc.args.empty()) j["args"] = doc.args;
    json states = json::object();
    for (const auto& [role, by_id] : doc.states) {
      json rs = json::object();
      for (const auto& [id, st] : by_id) rs[id] = state_json(st);
      states[role] = std::move(rs);
    }
    j["states"] = std::move(states);
    json results = json::array();
    for (const auto& r : doc.results) results.push_back(result_json(r));
    j["results"] = std::move(results);
  } else {
    json steps = json::array();
    for (const auto& s : doc.steps) steps.push_back(step_json(s));
    j["steps"] = std::move(steps);
    if (doc.requester_role) j["requester_role"] = *doc.requester_role;
  }
  return j.dump(2) + "\n";
}

}  // namespace sead::mdl
