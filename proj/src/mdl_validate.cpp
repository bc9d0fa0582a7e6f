#include <algorithm>
#include <cctype>
#include <deque>
#include <functional>
#include <set>
#include <sstream>

#include "sead/mdl.hpp"

namespace sead::mdl {
namespace {

struct Checker {
  const MdlDocument& doc;
  const Registry* reg;
  std::vector<Diagnostic>& out;

  void error(const char* rule, const std::string& path, const std::string& msg) {
    out.push_back({Diagnostic::Severity::Error, rule, path, msg});
  }
  void warning(const char* rule, const std::string& path, const std::string& msg) {
    out.push_back({Diagnostic::Severity::Warning, rule, path, msg});
  }

  static bool is_action_name(const std::string& s) {
    if (s.empty() || !std::isupper((unsigned char)s[0])) return false;
    for (char c : s) {
      if (!(std::isupper((unsigned char)c) || std::isdigit((unsigned char)c) || c == '_')) {
        return false;
      }
    }
    return true;
  }

  static bool is_local_name(const std::string& s) {
    if (s.empty() || !std::islower((unsigned char)s[0])) return false;
    for (char c : s) {
      if (!(std::islower((unsigned char)c) || std::isdigit((unsigned char)c) || c == '_')) {
        return false;
      }
    }
    return true;
  }

  void check_ids() {
    if (!is_action_name(doc.id)) {
      error(rules::kIdShape, "/id", "action ids are UPPER_SNAKE, got \"" + doc.id + "\"");
    }
  }

  // ---- shared -------------------------------------------------------------

  bool is_param_ref(const ParamValue& v) const {
    return !std::holds_alternative<double>(v) && !std::holds_alternative<bool>(v) &&
           !std::holds_alternative<std::string>(v);
  }

  // Params attached to sub-manoeuvre primitives: literals, "self", $arg
  // (controlling side), $payload. Platoon/vehicle references are resolved in
  // the leader's context and belong to manoeuvre step args.
  void check_sub_param(const ParamValue& v, const RoleDef& role, const std::string& path) {
    if (std::holds_alternative<PlatoonRef>(v) || std::holds_alternative<VehicleRef>(v)) {
      error(rules::kParamShape, path, "$platoon/$vehicle references are manoeuvre step args");
      return;
    }
    if (const auto* ar = std::get_if<ArgRef>(&v)) {
      if (role.part != RoleDef::Part::Controlling) {
        error(rules::kParamShape, path, "$arg is only available to the controlling part");
      }
      arg_refs.emplace_back(ar->key, path);
    }
    if (const auto* pr = std::get_if<PayloadRef>(&v)) {
      payload_refs.emplace_back(role.name, pr->key, path);
    }
  }

  // ---- sub-manoeuvre ------------------------------------------------------

  std::vector<std::tuple<std::string, std::string, std::string>> payload_refs;  // role, key, path
  std::vector<std::pair<std::string, std::string>> arg_refs;                    // key, path

  void check_sub() {
    check_sub_roles();
    check_results();
    for (const auto& [role_name, by_id] : doc.states) {
      const RoleDef* role = doc.role(role_name);
      if (!role) {
        error(rules::kRoleShape, "/states/" + role_name, "states for unknown role");
        continue;
      }
      for (const auto& [state_id, state] : by_id) {
        check_state(*role, state_id, state);
      }
    }
    check_payload_refs();
    check_declared_args();
    for (const auto& role : doc.roles) track_role(role);
  }

  // Declared parameters and $arg uses must match exactly: an undeclared use
  // would fail at instantiation, an unused declaration widens every caller's
  // obligation for nothing.
  void check_declared_args() {
    std::set<std::string> declared(doc.args.begin(), doc.args.end());
    std::set<std::string> used;
    for (const auto& [key, path] : arg_refs) {
      used.insert(key);
      if (!declared.count(key)) {
        error(rules::kArgsMismatch, path, "$arg \"" + key + "\" is not a declared parameter");
      }
    }
    for (const auto& a : doc.args) {
      if (!used.count(a)) {
        error(rules::kArgsMismatch, "/args", "declared parameter \"" + a + "\" is never used");
      }
    }
  }

  void check_sub_roles() {
    int controlling = 0;
    int reactive = 0;
    std::set<std::string> names;
    for (std::size_t i = 0; i < doc.roles.size(); ++i) {
      const RoleDef& r = doc.roles[i];
      const std::string path = "/roles/" + std::to_string(i);
      if (!names.insert(r.name).second) error(rules::kRoleShape, path, "duplicate role name");
      if (r.part == RoleDef::Part::Controlling) {
        ++controlling;
        if (r.entry_state != IdleState::PL) {
          error(rules::kRoleShape, path, "the controlling part executes on a platoon leader");
        }
      } else {
        ++reactive;
        if (r.init == RoleDef::Init::Direct && !is_stable(r.entry_state)) {
          error(rules::kRoleShape, path, "a directly-initiated reactive role starts idle-stable");
        }
      }
      if (!doc.state(r.name, r.start)) {
        error(rules::kRoleShape, path + "/start", "start state \"" + r.start + "\" not defined");
      }
    }
    if (controlling != 1 || reactive != 1) {
      error(rules::kRoleShape, "/roles",
            "a sub-manoeuvre is pairwise: exactly one controlling and one reactive role");
    }
    for (const auto& r : doc.roles) {
      auto it = doc.states.find(r.name);
      if (it == doc.states.end() || it->second.empty()) {
        error(rules::kRoleShape, "/states", "role \"" + r.name + "\" has no states");
      }
    }
  }

  void check_results() {
    std::set<std::string> labels;
    std::set<std::string> role_names;
    for (const auto& r : doc.roles) role_names.insert(r.name);
    bool has_rs = false;
    for (std::size_t i = 0; i < doc.results.size(); ++i) {
      const ResultDef& r = doc.results[i];
      const std::string path = "/results/" + std::to_string(i);
      if (!labels.insert(r.label).second) {
        error(rules::kResultShape, path, "duplicate result label " + r.label);
      }
      if (is_success_label(r.label)) has_rs = true;
      std::set<std::string> declared;
      for (const auto& [role, idle] : r.final_states) {
        declared.insert(role);
        if (!role_names.count(role)) {
          error(rules::kResultShape, path + "/final", "unknown role \"" + role + "\"");
        }
      }
      if (declared != role_names) {
        error(rules::kResultShape, path + "/final",
              "result must declare a final idle state for every role");
      }
    }
    if (!has_rs) error(rules::kResultShape, "/results", "missing success result RS");
  }

  void check_state(const RoleDef& role, const std::string& state_id, const StateDef& state) {
    const std::string path = "/states/" + role.name + "/" + state_id;
    if (!is_local_name(state_id)) {
      error(rules::kIdShape, path, "state ids are lower_snake, got \"" + state_id + "\"");
    }
    const bool is_msg_entry =
        role.init == RoleDef::Init::Message && state_id == role.start;

    // primitives
    int w_count = 0;
    bool has_target_primitive = false;
    std::optional<double> w_timeout;
    for (std::size_t i = 0; i < state.primitives.size(); ++i) {
      const PrimitiveDef& p = state.primitives[i];
      const std::string ppath = path + "/primitives/" + std::to_string(i);
      if (p.op == PrimitiveOp::W) {
        ++w_count;
        if (w_count > 1) error(rules::kWaitShape, ppath, "at most one W per state");
        if (i + 1 != state.primitives.size()) {
          error(rules::kWaitShape, ppath, "W must be the last primitive of its state");
        }
        if (p.wait_for && (p.wait_for->kind == EventPattern::Kind::Done ||
                           p.wait_for->kind == EventPattern::Kind::Policy)) {
          error(rules::kWaitShape, ppath + "/for", "W cannot wait for done/policy events");
        }
        w_timeout = p.timeout_s;
      }
      if (p.op == PrimitiveOp::MTP || p.op == PrimitiveOp::SH) has_target_primitive = true;
      check_primitive_params(role, p, ppath);
      if (is_msg_entry) {
        error(rules::kTriggerKind, ppath,
              "the entry state of a message-initiated role carries no primitives");
      }
    }

    // transitions
    if (state.transitions.empty()) {
      error(rules::kTransitionDeadEnd, path, "state has no transitions");
    }
    bool has_done = false;
    int timeout_count = 0;
    for (std::size_t i = 0; i < state.transitions.size(); ++i) {
      const TransitionDef& t = state.transitions[i];
      const std::string tpath = path + "/transitions/" + std::to_string(i);
      switch (t.on.kind) {
        case EventPattern::Kind::Done:
          has_done = true;
          break;
        case EventPattern::Kind::Timeout: {
          ++timeout_count;
          if (t.on.timeout_s && w_timeout) {
            error(rules::kWaitShape, tpath, "deadline given both inline and on W");
          }
          bool has_deadline = t.on.timeout_s || w_timeout ||
                              role.part == RoleDef::Part::Controlling;  // default applies
          if (!has_deadline) {
            error(rules::kWaitShape, tpath,
                  "reactive timeout transition needs an inline or W deadline");
          }
          break;
        }
        case EventPattern::Kind::Arrived:
          if (!has_target_primitive) {
            error(rules::kWaitShape, tpath,
                  "arrived transition without a positioning primitive (MTP/SH)");
          }
          break;
        case EventPattern::Kind::Policy:
          if (role.part != RoleDef::Part::Controlling) {
            error(rules::kTriggerKind, tpath, "policy events occur on the controlling part");
          }
          break;
        case EventPattern::Kind::Msg:
          if (is_msg_entry && *t.on.msg_kind != MessageKind::REQ &&
              *t.on.msg_kind != MessageKind::ORD) {
            error(rules::kTriggerKind, tpath,
                  "a message-initiated role is triggered by REQ or ORD");
          }
          break;
      }
      if (is_msg_entry && t.on.kind != EventPattern::Kind::Msg) {
        error(rules::kTriggerKind, tpath,
              "the entry state of a message-initiated role reacts to messages only");
      }
      // targets
      if (t.to_result) {
        if (!doc.result(t.to)) {
          error(rules::kUnknownTarget, tpath, "undeclared result " + t.to);
        }
      } else if (!doc.state(role.name, t.to)) {
        error(rules::kUnknownTarget, tpath, "unknown state \"" + t.to + "\"");
      }
    }
    if (timeout_count > 1) {
      error(rules::kWaitShape, path, "multiple timeout transitions are ambiguous");
    }
    if (has_done && (state.transitions.size() != 1 || w_count != 0)) {
      error(rules::kWaitShape, path,
            "a done transition fires immediately and must be the state's only transition");
    }
  }

  void check_primitive_params(const RoleDef& role, const PrimitiveDef& p,
                              const std::string& path) {
    switch (p.op) {
      case PrimitiveOp::MTP: {
        if (const auto* s = std::get_if<std::string>(&*p.target); s && *s != "self") {
          error(rules::kParamShape, path + "/target",
                "MTP target is \"self\" or a $-reference, not a hard-coded vehicle");
        }
        check_sub_param(*p.target, role, path + "/target");
        if (p.offset_m) check_sub_param(*p.offset_m, role, path + "/offset_m");
        if (p.lane_offset) check_sub_param(*p.lane_offset, role, path + "/lane_offset");
        break;
      }
      case PrimitiveOp::SH: {
        if (p.th_s.has_value() == p.space_m.has_value()) {
          error(rules::kParamShape, path, "SH takes exactly one of th_s / space_m");
        }
        if (p.th_s) check_sub_param(*p.th_s, role, path + "/th_s");
        if (p.space_m) check_sub_param(*p.space_m, role, path + "/space_m");
        if (p.ahead) check_sub_param(*p.ahead, role, path + "/ahead");
        break;
      }
      case PrimitiveOp::SND:
        check_snd(role, *p.msg, path + "/msg");
        break;
      default:
        break;
    }
  }

  void check_snd(const RoleDef& sender, const SndTemplate& t, const std::string& path) {
    if (t.kind == MessageKind::TMPL_SPLIT) {
      error(rules::kSndShape, path, "TMPL_SPLIT is runtime-generated and cannot be sent by MDL");
    }
    const RoleDef* to = doc.role(t.to_role);
    if (!to) {
      error(rules::kSndShape, path + "/to", "unknown role \"" + t.to_role + "\"");
    } else if (to->name == sender.name) {
      error(rules::kSndShape, path + "/to", "a role cannot message itself");
    } else if (sender.part == RoleDef::Part::Reactive &&
               to->part != RoleDef::Part::Controlling) {
      error(rules::kSndShape, path + "/to", "the reactive part reports to the controlling role");
    }
    if ((t.forward_args || !t.payload.empty()) && !kind_carries_payload(t.kind)) {
      error(rules::kPayloadForbidden, path,
            std::string(to_string(t.kind)) + " messages carry no payload");
    }
    for (const auto& [key, v] : t.payload) {
      check_sub_param(v, sender, path + "/payload/" + key);
    }
  }

  // $payload references must name keys the counterpart actually sends.
  void check_payload_refs() {
    if (doc.roles.size() != 2) return;  // role-shape error already reported
    for (const auto& [role_name, key, path] : payload_refs) {
      const RoleDef* other = nullptr;
      for (const auto& r : doc.roles) {
        if (r.name != role_name) other = &r;
      }
      if (!other) continue;
      bool wildcard = false;
      bool found = false;
      auto it = doc.states.find(other->name);
      if (it != doc.states.end()) {
        for (const auto& [sid, state] : it->second) {
          for (const auto& p : state.primitives) {
            if (p.op != PrimitiveOp::SND || !p.msg) continue;
            if (p.msg->forward_args) wildcard = true;
            if (p.msg->payload.count(key)) found = true;
          }
        }
      }
      if (!found && !wildcard) {
        error(rules::kPayloadRefUnknown, path,
              "counterpart role \"" + other->name + "\" never sends payload key \"" + key + "\"");
      }
    }

    // the reverse direction: a sent field nobody reads is dead weight at best
    // and a stale rename at worst
    for (const auto& sender : doc.roles) {
      const RoleDef* other = nullptr;
      for (const auto& r : doc.roles) {
        if (r.name != sender.name) other = &r;
      }
      if (!other) continue;
      std::set<std::string> consumed;
      for (const auto& [role_name, key, path] : payload_refs) {
        if (role_name == other->name) consumed.insert(key);
      }
      auto it = doc.states.find(sender.name);
      if (it == doc.states.end()) continue;
      for (const auto& [sid, state] : it->second) {
        for (std::size_t i = 0; i < state.primitives.size(); ++i) {
          const auto& p = state.primitives[i];
          if (p.op != PrimitiveOp::SND || !p.msg || p.msg->forward_args) continue;
          for (const auto& [key, v] : p.msg->payload) {
            if (!consumed.count(key)) {
              error(rules::kPayloadKeyUnused,
                    "/states/" + sender.name + "/" + sid + "/primitives/" + std::to_string(i),
                    "payload key \"" + key + "\" is never read by role \"" + other->name + "\"");
            }
          }
        }
      }
    }
  }

  // Replay primitive effects along every path, checking the actor table and
  // the declared result states against the tracked idle state.
  void track_role(const RoleDef& role) {
    auto states_it = doc.states.find(role.name);
    if (states_it == doc.states.end()) return;
    const auto& by_id = states_it->second;

    std::set<std::pair<std::string, IdleState>> visited;
    std::deque<std::pair<std::string, IdleState>> queue;
    std::set<std::string> reached_results;
    if (by_id.count(role.start)) queue.push_back({role.start, role.entry_state});

    while (!queue.empty()) {
      auto [state_id, idle] = queue.front();
      queue.pop_front();
      if (!visited.insert({state_id, idle}).second) continue;
      auto sit = by_id.find(state_id);
      if (sit == by_id.end()) continue;
      const StateDef& state = sit->second;
      const std::string path = "/states/" + role.name + "/" + state_id;

      IdleState tracked = idle;
      for (std::size_t i = 0; i < state.primitives.size(); ++i) {
        const PrimitiveOp op = state.primitives[i].op;
        if (!primitive_allowed(op, tracked)) {
          error(rules::kActorViolation, path + "/primitives/" + std::to_string(i),
                std::string(to_string(op)) + " is not available to a vehicle in " +
                    std::string(to_string(tracked)));
          // keep tracking past the offending primitive so one violation does
          // not cascade into unrelated reachability errors
          continue;
        }
        switch (op) {
          case PrimitiveOp::BFV: tracked = IdleState::FV; break;
          case PrimitiveOp::BPL: tracked = IdleState::PL; break;
          case PrimitiveOp::BPF: tracked = IdleState::PF; break;
          case PrimitiveOp::BTL: tracked = IdleState::TPL; break;
          case PrimitiveOp::SW:
          case PrimitiveOp::USW: tracked = waiting_counterpart(tracked); break;
          default: break;
        }
      }

      for (const auto& t : state.transitions) {
        if (t.to_result) {
          reached_results.insert(t.to);
          const ResultDef* r = doc.result(t.to);
          if (!r) continue;  // reported as unknown target
          auto fin = r->final_states.find(role.name);
          if (fin != r->final_states.end() && fin->second != tracked) {
            error(rules::kResultStateMismatch, path,
                  "result " + t.to + " declares " + role.name + "=" +
                      std::string(to_string(fin->second)) + " but this path tracks " +
                      std::string(to_string(tracked)));
          }
        } else if (by_id.count(t.to)) {
          queue.push_back({t.to, tracked});
        }
      }
    }

    for (const auto& r : doc.results) {
      if (!reached_results.count(r.label)) {
        error(rules::kUnreachableResult, "/results",
              "role \"" + role.name + "\" has no path producing result " + r.label);
      }
    }
  }

  // ---- manoeuvre ----------------------------------------------------------

  void check_manoeuvre() {
    std::set<std::string> role_names;
    for (std::size_t i = 0; i < doc.roles.size(); ++i) {
      if (!role_names.insert(doc.roles[i].name).second) {
        error(rules::kRoleShape, "/roles/" + std::to_string(i), "duplicate role name");
      }
    }

    std::set<std::string> step_ids;
    for (const auto& s : doc.steps) {
      if (!step_ids.insert(s.id).second) {
        error(rules::kStepShape, "/steps", "duplicate step id \"" + s.id + "\"");
      }
      if (!is_local_name(s.id)) {
        error(rules::kIdShape, "/steps", "step ids are lower_snake, got \"" + s.id + "\"");
      }
    }

    for (std::size_t i = 0; i < doc.steps.size(); ++i) {
      check_step(doc.steps[i], i, role_names, step_ids);
    }
    check_cycles();
    check_requester();
  }

  void check_step(const StepDef& s, std::size_t index, const std::set<std::string>& role_names,
                  const std::set<std::string>& step_ids) {
    const std::string path = "/steps/" + std::to_string(index);

    std::vector<const MdlDocument*> invoked(s.invoke.size(), nullptr);
    std::set<std::string> bound_vehicles;
    for (std::size_t k = 0; k < s.invoke.size(); ++k) {
      const StepInvocation& inv = s.invoke[k];
      const std::string ipath = s.sim ? path + "/invoke/sim/" + std::to_string(k) : path;

      const MdlDocument* sub = reg ? reg->find(inv.action) : nullptr;
      if (reg) {
        if (!sub) {
          error(rules::kUnresolvedReference, ipath, "unknown action \"" + inv.action + "\"");
        } else if (sub->kind != MdlDocument::Kind::SubManoeuvre) {
          error(rules::kUnresolvedReference, ipath,
                "steps invoke sub-manoeuvres, and \"" + inv.action + "\" is not one");
          sub = nullptr;
        }
      }
      invoked[k] = sub;

      if (sub && sub->controlling_role() &&
          sub->controlling_role()->init == RoleDef::Init::Message && index != 0) {
        error(rules::kStepShape, ipath,
              "a request-initiated sub-manoeuvre can only open a manoeuvre");
      }

      // participant bindings
      for (const auto& [sub_role, man_role] : inv.participants) {
        if (!role_names.count(man_role)) {
          error(rules::kUnresolvedReference, ipath + "/participants/" + sub_role,
                "unknown manoeuvre role \"" + man_role + "\"");
        } else if (s.sim && !bound_vehicles.insert(man_role).second) {
          error(rules::kSimParticipantOverlap, ipath + "/participants/" + sub_role,
                "role \"" + man_role + "\" participates in two simultaneous invocations");
        }
        if (sub) {
          const RoleDef* sr = sub->role(sub_role);
          if (!sr) {
            error(rules::kUnresolvedReference, ipath + "/participants/" + sub_role,
                  "\"" + inv.action + "\" has no role \"" + sub_role + "\"");
          } else if (sr->part == RoleDef::Part::Controlling) {
            error(rules::kUnresolvedReference, ipath + "/participants/" + sub_role,
                  "the controlling role runs on the leader and is not bound");
          }
        }
      }
      if (sub) {
        for (const auto& r : sub->roles) {
          if (r.part == RoleDef::Part::Reactive && !inv.participants.count(r.name)) {
            error(rules::kBindingMissing, ipath,
                  "reactive role \"" + r.name + "\" of \"" + inv.action + "\" is unbound");
          }
        }
        std::set<std::string> formal(sub->args.begin(), sub->args.end());
        for (const auto& [key, v] : inv.args) {
          if (!formal.count(key)) {
            error(rules::kArgsMismatch, ipath + "/args/" + key,
                  "\"" + inv.action + "\" declares no parameter \"" + key + "\"");
          }
        }
        for (const auto& a : sub->args) {
          if (!inv.args.count(a)) {
            error(rules::kArgsMismatch, ipath,
                  "invocation of \"" + inv.action + "\" omits parameter \"" + a + "\"");
          }
        }
        // entry idle of the first step has no data-flow to consider
        if (index == 0) {
          for (const auto& [sub_role, man_role] : inv.participants) {
            const RoleDef* sr = sub->role(sub_role);
            const RoleDef* mr = doc.role(man_role);
            if (sr && mr && sr->part == RoleDef::Part::Reactive &&
                sr->entry_state != mr->entry_state) {
              error(rules::kEntryMismatch, ipath + "/participants/" + sub_role,
                    "role \"" + man_role + "\" enters as " +
                        std::string(to_string(mr->entry_state)) + " but \"" + inv.action +
                        "\" expects " + std::string(to_string(sr->entry_state)));
            }
          }
        }
      }

      // step args live in the leader's context
      for (const auto& [key, v] : inv.args) {
        const std::string apath = ipath + "/args/" + key;
        if (std::holds_alternative<ArgRef>(v) || std::holds_alternative<PayloadRef>(v)) {
          error(rules::kParamShape, apath,
                "step args are resolved in the leader's context ($platoon/$vehicle/literals)");
        }
        if (const auto* vr = std::get_if<VehicleRef>(&v);
            vr && vr->kind != VehicleRef::Kind::PlatoonAnchor && !role_names.count(vr->name)) {
          error(rules::kUnresolvedReference, apath, "unknown role \"" + vr->name + "\"");
        }
      }
    }

    // next coverage over the Cartesian product of invoked result labels
    bool labels_known = reg && !s.invoke.empty();
    std::vector<std::vector<std::string>> label_sets;
    for (const MdlDocument* sub : invoked) {
      if (!sub) {
        labels_known = false;
        break;
      }
      std::vector<std::string> labels;
      for (const auto& r : sub->results) labels.push_back(r.label);
      label_sets.push_back(std::move(labels));
    }

    std::set<std::vector<std::string>> covered;
    for (std::size_t n = 0; n < s.next.size(); ++n) {
      const NextEntry& e = s.next[n];
      const std::string npath = path + "/next/" + std::to_string(n);
      if (e.on.size() != s.invoke.size()) {
        error(rules::kStepShape, npath,
              "expected " + std::to_string(s.invoke.size()) + " result label(s), got " +
                  std::to_string(e.on.size()));
        continue;
      }
      if (labels_known) {
        for (std::size_t k = 0; k < e.on.size(); ++k) {
          const auto& ls = label_sets[k];
          if (std::find(ls.begin(), ls.end(), e.on[k]) == ls.end()) {
            error(rules::kUnresolvedReference, npath,
                  "\"" + s.invoke[k].action + "\" declares no result " + e.on[k]);
          }
        }
      }
      if (!covered.insert(e.on).second) {
        error(rules::kStepShape, npath, "result tuple covered twice");
      }
      if (e.to != "TERMINATE" && !step_ids.count(e.to)) {
        error(rules::kUnknownTarget, npath, "unknown step \"" + e.to + "\"");
      }
    }
    if (labels_known) {
      std::vector<std::vector<std::string>> tuples{{}};
      for (const auto& ls : label_sets) {
        std::vector<std::vector<std::string>> grown;
        for (const auto& t : tuples) {
          for (const auto& l : ls) {
            auto t2 = t;
            t2.push_back(l);
            grown.push_back(std::move(t2));
          }
        }
        tuples = std::move(grown);
      }
      for (const auto& t : tuples) {
        if (!covered.count(t)) {
          std::string joined;
          for (const auto& l : t) joined += (joined.empty() ? "" : ",") + l;
          error(rules::kResultCoverageMissing, path,
                "no next entry for result (" + joined + ")");
        }
      }
    }
  }

  void check_cycles() {
    // steps must make progress towards TERMINATE
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < doc.steps.size(); ++i) index[doc.steps[i].id] = int(i);
    enum class Mark { None, Active, Done };
    std::vector<Mark> marks(doc.steps.size(), Mark::None);
    bool cycle = false;
    std::function<void(int)> visit = [&](int i) {
      if (cycle || marks[i] == Mark::Done) return;
      if (marks[i] == Mark::Active) {
        cycle = true;
        return;
      }
      marks[i] = Mark::Active;
      for (const auto& e : doc.steps[i].next) {
        auto it = index.find(e.to);
        if (it != index.end()) visit(it->second);
      }
      marks[i] = Mark::Done;
    };
    if (!doc.steps.empty()) visit(0);
    if (cycle) {
      error(rules::kManoeuvreCycle, "/steps", "step graph contains a cycle");
    }
  }

  void check_requester() {
    bool negotiated = false;
    const MdlDocument* first_sub = nullptr;
    if (reg && !doc.steps.empty() && !doc.steps[0].sim) {
      first_sub = reg->find(doc.steps[0].invoke.front().action);
      if (first_sub && first_sub->kind == MdlDocument::Kind::SubManoeuvre) {
        const RoleDef* c = first_sub->controlling_role();
        negotiated = c && c->init == RoleDef::Init::Message;
      } else {
        first_sub = nullptr;
      }
    }
    if (doc.requester_role && !doc.role(*doc.requester_role)) {
      error(rules::kRequesterShape, "/requester_role",
            "unknown role \"" + *doc.requester_role + "\"");
      return;
    }
    if (!reg) return;
    if (negotiated) {
      if (!doc.requester_role) {
        error(rules::kRequesterShape, "",
              "a request-initiated manoeuvre names its requester_role");
        return;
      }
      // the requester must drive the opening sub-manoeuvre's direct-init role
      bool bound = false;
      if (first_sub) {
        for (const auto& [sub_role, man_role] : doc.steps[0].invoke.front().participants) {
          const RoleDef* sr = first_sub->role(sub_role);
          if (man_role == *doc.requester_role && sr && sr->init == RoleDef::Init::Direct &&
              sr->part == RoleDef::Part::Reactive) {
            bound = true;
          }
        }
      }
      if (!bound) {
        error(rules::kRequesterShape, "/requester_role",
              "requester_role must drive the opening request");
      }
    } else if (doc.requester_role) {
      error(rules::kRequesterShape, "/requester_role",
            "only request-initiated manoeuvres name a requester_role");
    }
  }
};

}  // namespace

std::vector<Diagnostic> validate(const MdlDocument& doc, const Registry* registry) {
  std::vector<Diagnostic> out;
  Checker c{doc, registry, out};
  c.check_ids();
  if (doc.kind == MdlDocument::Kind::SubManoeuvre) {
    c.check_sub();
  } else {
    c.check_manoeuvre();
  }
  return out;
}

}  // namespace sead::mdl
