#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sead/mdl.hpp"

namespace sead::mdl {
namespace {

using nlohmann::json;

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw SchemaError(msg, path);
}

const json& member(const json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(path, std::string("missing required key \"") + key + "\"");
  return *it;
}

// Strictness: every object is checked against the exact key set it may carry.
void check_keys(const json& j, const std::string& path, std::set<std::string> allowed,
                const std::set<std::string>& required) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& k : required) allowed.insert(k);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) fail(path, "unknown key \"" + it.key() + "\"");
  }
  for (const auto& k : required) {
    if (!j.contains(k)) fail(path, "missing required key \"" + k + "\"");
  }
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  std::string s = j.get<std::string>();
  if (s.empty()) fail(path, "expected a non-empty string");
  return s;
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

IdleState parse_idle(const json& j, const std::string& path) {
  std::string name = get_string(j, path);
  auto s = idle_state_from(name);
  if (!s) fail(path, "unknown idle state \"" + name + "\"");
  return *s;
}

MessageKind parse_kind(const json& j, const std::string& path) {
  std::string name = get_string(j, path);
  auto k = message_kind_from(name);
  if (!k) fail(path, "unknown message kind \"" + name + "\"");
  return *k;
}

ParamValue parse_param(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_string()) return j.get<std::string>();
  if (!j.is_object()) fail(path, "expected a literal or a $-reference object");

  auto scale_of = [&](const json& o) {
    return o.contains("scale") ? get_number(o["scale"], path + "/scale") : 1.0;
  };
  if (j.contains("$arg")) {
    check_keys(j, path, {"scale"}, {"$arg"});
    return ArgRef{get_string(j["$arg"], path + "/$arg"), scale_of(j)};
  }
  if (j.contains("$payload")) {
    check_keys(j, path, {"scale"}, {"$payload"});
    return PayloadRef{get_string(j["$payload"], path + "/$payload"), scale_of(j)};
  }
  if (j.contains("$platoon")) {
    check_keys(j, path, {"scale"}, {"$platoon"});
    std::string field = get_string(j["$platoon"], path + "/$platoon");
    if (field != "gap" && field != "spacing") {
      fail(path + "/$platoon", "expected \"gap\" or \"spacing\"");
    }
    return PlatoonRef{field, scale_of(j)};
  }
  if (j.contains("$vehicle")) {
    check_keys(j, path, {}, {"$vehicle"});
    const json& v = j["$vehicle"];
    const std::string vp = path + "/$vehicle";
    if (!v.is_object() || v.size() != 1) {
      fail(vp, "expected exactly one of \"role\", \"platoon\", \"predecessor_of\"");
    }
    if (v.contains("role")) {
      return VehicleRef{VehicleRef::Kind::Role, get_string(v["role"], vp + "/role")};
    }
    if (v.contains("platoon")) {
      std::string anchor = get_string(v["platoon"], vp + "/platoon");
      if (anchor != "tail" && anchor != "leader") {
        fail(vp + "/platoon", "expected \"tail\" or \"leader\"");
      }
      return VehicleRef{VehicleRef::Kind::PlatoonAnchor, anchor};
    }
    if (v.contains("predecessor_of")) {
      return VehicleRef{VehicleRef::Kind::PredecessorOf,
                        get_string(v["predecessor_of"], vp + "/predecessor_of")};
    }
    fail(vp, "expected one of \"role\", \"platoon\", \"predecessor_of\"");
  }
  fail(path, "unknown $-reference object");
}

bool is_param_name(const std::string& s) {
  if (s.empty() || !(std::islower((unsigned char)s[0]))) return false;
  for (char c : s) {
    if (!(std::islower((unsigned char)c) || std::isdigit((unsigned char)c) || c == '_')) {
      return false;
    }
  }
  return true;
}

std::map<std::string, ParamValue> parse_param_map(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  std::map<std::string, ParamValue> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!is_param_name(it.key())) {
      fail(path, "key \"" + it.key() + "\" is not a lowercase identifier");
    }
    out.emplace(it.key(), parse_param(it.value(), path + "/" + it.key()));
  }
  return out;
}

EventPattern parse_pattern(const json& j, const std::string& path) {
  if (!j.is_object() || j.size() != 1) {
    fail(path, "expected an object with exactly one of "
               "\"msg\", \"timeout\", \"arrived\", \"done\", \"policy\"");
  }
  EventPattern p;
  if (j.contains("msg")) {
    p.kind = EventPattern::Kind::Msg;
    std::string spec = get_string(j["msg"], path + "/msg");
    std::string kind_part = spec;
    if (auto slash = spec.find('/'); slash != std::string::npos) {
      kind_part = spec.substr(0, slash);
      std::string action = spec.substr(slash + 1);
      if (action.empty()) fail(path + "/msg", "empty action after '/'");
      p.msg_action = action;
    }
    p.msg_kind = message_kind_from(kind_part);
    if (!p.msg_kind) fail(path + "/msg", "unknown message kind \"" + kind_part + "\"");
    return p;
  }
  if (j.contains("timeout")) {
    p.kind = EventPattern::Kind::Timeout;
    const json& t = j["timeout"];
    if (t.is_boolean()) {
      if (!t.get<bool>()) fail(path + "/timeout", "expected true or a positive number");
    } else if (t.is_number()) {
      double s = t.get<double>();
      if (!(s > 0)) fail(path + "/timeout", "expected a positive number");
      p.timeout_s = s;
    } else {
      fail(path + "/timeout", "expected true or a positive number");
    }
    return p;
  }
  if (j.contains("arrived")) {
    p.kind = EventPattern::Kind::Arrived;
    if (!get_bool(j["arrived"], path + "/arrived")) fail(path + "/arrived", "expected true");
    return p;
  }
  if (j.contains("done")) {
    p.kind = EventPattern::Kind::Done;
    if (!get_bool(j["done"], path + "/done")) fail(path + "/done", "expected true");
    return p;
  }
  if (j.contains("policy")) {
    p.kind = EventPattern::Kind::Policy;
    std::string v = get_string(j["policy"], path + "/policy");
    if (v != "accept" && v != "reject") fail(path + "/policy", "expected \"accept\" or \"reject\"");
    p.policy_accept = (v == "accept");
    return p;
  }
  fail(path, "unknown event pattern");
}

SndTemplate parse_snd(const json& j, const std::string& path) {
  check_keys(j, path, {"action", "payload"}, {"kind", "to"});
  SndTemplate t;
  t.kind = parse_kind(j["kind"], path + "/kind");
  const json& to = j["to"];
  check_keys(to, path + "/to", {}, {"role"});
  t.to_role = get_string(to["role"], path + "/to/role");
  if (j.contains("action")) t.action = get_string(j["action"], path + "/action");
  if (j.contains("payload")) {
    const json& pl = j["payload"];
    if (pl.is_object() && pl.size() == 1 && pl.contains("$forward")) {
      if (!pl["$forward"].is_string() || pl["$forward"].get<std::string>() != "args") {
        fail(path + "/payload/$forward", "expected \"args\"");
      }
      t.forward_args = true;
    } else {
      t.payload = parse_param_map(pl, path + "/payload");
    }
  }
  return t;
}

PrimitiveDef parse_primitive(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  PrimitiveDef p;
  std::string op_name = get_string(member(j, path, "op"), path + "/op");
  auto op = primitive_op_from(op_name);
  if (!op) fail(path + "/op", "unknown primitive \"" + op_name + "\"");
  p.op = *op;
  switch (p.op) {
    case PrimitiveOp::MTP:
      check_keys(j, path, {"offset_m", "lane_offset"}, {"op", "target"});
      p.target = parse_param(j["target"], path + "/target");
      if (j.contains("offset_m")) p.offset_m = parse_param(j["offset_m"], path + "/offset_m");
      if (j.contains("lane_offset")) {
        p.lane_offset = parse_param(j["lane_offset"], path + "/lane_offset");
      }
      break;
    case PrimitiveOp::SH:
      check_keys(j, path, {"th_s", "space_m", "ahead"}, {"op"});
      if (j.contains("th_s")) p.th_s = parse_param(j["th_s"], path + "/th_s");
      if (j.contains("space_m")) p.space_m = parse_param(j["space_m"], path + "/space_m");
      if (j.contains("ahead")) p.ahead = parse_param(j["ahead"], path + "/ahead");
      break;
    case PrimitiveOp::W:
      check_keys(j, path, {"timeout_s", "for"}, {"op"});
      if (j.contains("timeout_s")) {
        double s = get_number(j["timeout_s"], path + "/timeout_s");
        if (!(s > 0)) fail(path + "/timeout_s", "expected a positive number");
        p.timeout_s = s;
      }
      if (j.contains("for")) p.wait_for = parse_pattern(j["for"], path + "/for");
      break;
    case PrimitiveOp::SND:
      check_keys(j, path, {}, {"op", "msg"});
      p.msg = parse_snd(j["msg"], path + "/msg");
      break;
    default:
      check_keys(j, path, {}, {"op"});
      break;
  }
  return p;
}

TransitionDef parse_transition(const json& j, const std::string& path) {
  check_keys(j, path, {}, {"on", "to"});
  TransitionDef t;
  t.on = parse_pattern(j["on"], path + "/on");
  const json& to = j["to"];
  if (to.is_string()) {
    t.to = get_string(to, path + "/to");
  } else if (to.is_object()) {
    check_keys(to, path + "/to", {}, {"result"});
    t.to_result = true;
    t.to = get_string(to["result"], path + "/to/result");
    if (!is_result_label(t.to)) fail(path + "/to/result", "not a result label: " + t.to);
  } else {
    fail(path + "/to", "expected a state id or {\"result\": label}");
  }
  return t;
}

StateDef parse_state(const json& j, const std::string& path) {
  check_keys(j, path, {"primitives", "transitions"}, {});
  StateDef s;
  if (j.contains("primitives")) {
    const json& prims = j["primitives"];
    if (!prims.is_array()) fail(path + "/primitives", "expected an array");
    for (std::size_t i = 0; i < prims.size(); ++i) {
      s.primitives.push_back(
          parse_primitive(prims[i], path + "/primitives/" + std::to_string(i)));
    }
  }
  if (j.contains("transitions")) {
    const json& ts = j["transitions"];
    if (!ts.is_array()) fail(path + "/transitions", "expected an array");
    for (std::size_t i = 0; i < ts.size(); ++i) {
      s.transitions.push_back(
          parse_transition(ts[i], path + "/transitions/" + std::to_string(i)));
    }
  }
  return s;
}

RoleDef parse_role(const json& j, const std::string& path, MdlDocument::Kind kind) {
  RoleDef r;
  if (kind == MdlDocument::Kind::SubManoeuvre) {
    check_keys(j, path, {"init"}, {"name", "part", "entry_state", "start"});
    std::string part = get_string(j["part"], path + "/part");
    if (part == "controlling") {
      r.part = RoleDef::Part::Controlling;
    } else if (part == "reactive") {
      r.part = RoleDef::Part::Reactive;
    } else {
      fail(path + "/part", "expected \"controlling\" or \"reactive\"");
    }
    r.start = get_string(j["start"], path + "/start");
    r.init = r.part == RoleDef::Part::Controlling ? RoleDef::Init::Direct : RoleDef::Init::Message;
    if (j.contains("init")) {
      std::string init = get_string(j["init"], path + "/init");
      if (init == "direct") {
        r.init = RoleDef::Init::Direct;
      } else if (init == "message") {
        r.init = RoleDef::Init::Message;
      } else {
        fail(path + "/init", "expected \"direct\" or \"message\"");
      }
      r.init_explicit = true;
    }
  } else {
    check_keys(j, path, {}, {"name", "entry_state"});
  }
  r.name = get_string(j["name"], path + "/name");
  r.entry_state = parse_idle(j["entry_state"], path + "/entry_state");
  return r;
}

ResultDef parse_result(const json& j, const std::string& path) {
  check_keys(j, path, {}, {"label", "final"});
  ResultDef r;
  r.label = get_string(j["label"], path + "/label");
  if (!is_result_label(r.label)) fail(path + "/label", "not a result label: " + r.label);
  const json& fin = j["final"];
  if (!fin.is_object()) fail(path + "/final", "expected an object");
  for (auto it = fin.begin(); it != fin.end(); ++it) {
    r.final_states.emplace(it.key(), parse_idle(it.value(), path + "/final/" + it.key()));
  }
  return r;
}

std::map<std::string, std::string> parse_bindings(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  std::map<std::string, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out.emplace(it.key(), get_string(it.value(), path + "/" + it.key()));
  }
  return out;
}

StepInvocation parse_invocation(const json& j, const std::string& path) {
  check_keys(j, path, {"participants", "args"}, {"action"});
  StepInvocation inv;
  inv.action = get_string(j["action"], path + "/action");
  if (j.contains("participants")) {
    inv.participants = parse_bindings(j["participants"], path + "/participants");
  }
  if (j.contains("args")) inv.args = parse_param_map(j["args"], path + "/args");
  return inv;
}

NextEntry parse_next(const json& j, const std::string& path) {
  check_keys(j, path, {}, {"on", "to"});
  NextEntry n;
  const json& on = j["on"];
  if (on.is_string()) {
    n.on.push_back(get_string(on, path + "/on"));
  } else if (on.is_array()) {
    if (on.empty()) fail(path + "/on", "expected at least one result label");
    for (std::size_t i = 0; i < on.size(); ++i) {
      n.on.push_back(get_string(on[i], path + "/on/" + std::to_string(i)));
    }
  } else {
    fail(path + "/on", "expected a result label or an array of result labels");
  }
  for (std::size_t i = 0; i < n.on.size(); ++i) {
    if (!is_result_label(n.on[i])) {
      fail(path + "/on/" + std::to_string(i), "not a result label: " + n.on[i]);
    }
  }
  n.to = get_string(j["to"], path + "/to");
  return n;
}

StepDef parse_step(const json& j, const std::string& path) {
  check_keys(j, path, {"participants", "args"}, {"id", "invoke", "next"});
  StepDef s;
  s.id = get_string(j["id"], path + "/id");
  const json& inv = j["invoke"];
  if (inv.is_string()) {
    StepInvocation one;
    one.action = get_string(inv, path + "/invoke");
    if (j.contains("participants")) {
      one.participants = parse_bindings(j["participants"], path + "/participants");
    }
    if (j.contains("args")) one.args = parse_param_map(j["args"], path + "/args");
    s.invoke.push_back(std::move(one));
  } else if (inv.is_object()) {
    check_keys(inv, path + "/invoke", {}, {"sim"});
    if (j.contains("participants") || j.contains("args")) {
      fail(path, "sim steps carry participants/args inside each invocation");
    }
    s.sim = true;
    const json& arr = inv["sim"];
    if (!arr.is_array() || arr.size() < 2) {
      fail(path + "/invoke/sim", "expected an array of at least two invocations");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      s.invoke.push_back(parse_invocation(arr[i], path + "/invoke/sim/" + std::to_string(i)));
    }
  } else {
    fail(path + "/invoke", "expected an action id or {\"sim\": [...]}");
  }
  const json& next = j["next"];
  if (!next.is_array()) fail(path + "/next", "expected an array");
  for (std::size_t i = 0; i < next.size(); ++i) {
    s.next.push_back(parse_next(next[i], path + "/next/" + std::to_string(i)));
  }
  return s;
}

MdlDocument parse_doc_json(const json& j) {
  const std::string path = "";
  if (!j.is_object()) fail("", "expected a top-level object");
  const json& ver = member(j, "", "mdl-version");
  if (!ver.is_string() || ver.get<std::string>() != kMdlVersion) {
    fail("/mdl-version", "unsupported MDL version (expected \"1\")");
  }

  MdlDocument doc;
  std::string kind = get_string(member(j, "", "kind"), "/kind");
  if (kind == "sub-manoeuvre") {
    doc.kind = MdlDocument::Kind::SubManoeuvre;
    check_keys(j, "", {"args"}, {"mdl-version", "id", "kind", "roles", "states", "results"});
    if (j.contains("args")) {
      const json& args = j["args"];
      if (!args.is_array()) fail("/args", "expected an array of parameter names");
      std::set<std::string> seen;
      for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string apath = "/args/" + std::to_string(i);
        std::string name = get_string(args[i], apath);
        if (!is_param_name(name)) fail(apath, "not a lowercase identifier: \"" + name + "\"");
        if (!seen.insert(name).second) fail(apath, "duplicate parameter \"" + name + "\"");
        doc.args.push_back(std::move(name));
      }
    }
  } else if (kind == "manoeuvre") {
    doc.kind = MdlDocument::Kind::Manoeuvre;
    check_keys(j, "", {"requester_role"}, {"mdl-version", "id", "kind", "roles", "steps"});
  } else {
    fail("/kind", "expected \"sub-manoeuvre\" or \"manoeuvre\"");
  }
  doc.id = get_string(j["id"], "/id");

  const json& roles = j["roles"];
  if (!roles.is_array() || roles.empty()) fail("/roles", "expected a non-empty array");
  for (std::size_t i = 0; i < roles.size(); ++i) {
    doc.roles.push_back(parse_role(roles[i], "/roles/" + std::to_string(i), doc.kind));
  }

  if (doc.kind == MdlDocument::Kind::SubManoeuvre) {
    const json& states = j["states"];
    if (!states.is_object()) fail("/states", "expected an object keyed by role");
    for (auto rit = states.begin(); rit != states.end(); ++rit) {
      const json& by_id = rit.value();
      const std::string rpath = "/states/" + rit.key();
      if (!by_id.is_object()) fail(rpath, "expected an object keyed by state id");
      auto& role_states = doc.states[rit.key()];
      for (auto sit = by_id.begin(); sit != by_id.end(); ++sit) {
        role_states.emplace(sit.key(), parse_state(sit.value(), rpath + "/" + sit.key()));
      }
    }
    const json& results = j["results"];
    if (!results.is_array() || results.empty()) fail("/results", "expected a non-empty array");
    for (std::size_t i = 0; i < results.size(); ++i) {
      doc.results.push_back(parse_result(results[i], "/results/" + std::to_string(i)));
    }
  } else {
    const json& steps = j["steps"];
    if (!steps.is_array() || steps.empty()) fail("/steps", "expected a non-empty array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      doc.steps.push_back(parse_step(steps[i], "/steps/" + std::to_string(i)));
    }
    if (j.contains("requester_role")) {
      doc.requester_role = get_string(j["requester_role"], "/requester_role");
    }
  }
  return doc;
}

}  // namespace

MdlDocument parse_document(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::ostringstream os;
    os << "malformed JSON at line " << line << ", column " << col << ": " << e.what();
    throw ParseError(os.str(), line, col);
  }
  return parse_doc_json(j);
}

MdlDocument load_document(const std::string& file_path) {
  std::ifstream in(file_path, std::ios::binary);
  if (!in) throw MdlError("cannot open " + file_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_document(buf.str());
  } catch (const MdlError& e) {
    throw MdlError(file_path + ": " + e.what());
  }
}

}  // namespace sead::mdl
