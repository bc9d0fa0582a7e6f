#include "sead/runtime.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace sead::rt {

// ---------------------------------------------------------------------------
// PlatoonInfo
// ---------------------------------------------------------------------------

bool PlatoonInfo::contains(const VehicleId& v) const {
  return std::find(members.begin(), members.end(), v) != members.end();
}

int PlatoonInfo::position_of(const VehicleId& v) const {
  for (std::size_t i = 0; i < members.size(); ++i)
    if (members[i] == v) return static_cast<int>(i);
  return -1;
}

PlatoonInfo solo_platoon(const VehicleId& v) {
  PlatoonInfo p;
  p.leader = v;
  p.members = {v};
  return p;
}

namespace {

// Single-step manoeuvre around a bare sub-manoeuvre so initiation and
// requests always run through the same executor.
std::unique_ptr<mdl::MdlDocument> wrap_sub(const mdl::MdlDocument& sub) {
  auto w = std::make_unique<mdl::MdlDocument>();
  w->id = sub.id;
  w->kind = mdl::MdlDocument::Kind::Manoeuvre;

  const mdl::RoleDef* reactive = nullptr;
  const mdl::RoleDef* controlling = nullptr;
  for (const auto& r : sub.roles) {
    if (r.part == mdl::RoleDef::Part::Reactive) reactive = &r;
    else controlling = &r;
  }
  if (!reactive || !controlling) throw DomainError(sub.id + ": not a two-role sub-manoeuvre");

  mdl::RoleDef role;
  role.name = reactive->name;
  role.entry_state = reactive->entry_state;
  w->roles.push_back(std::move(role));

  mdl::StepDef step;
  step.id = "run";
  mdl::StepInvocation inv;
  inv.action = sub.id;
  inv.participants[reactive->name] = reactive->name;
  step.invoke.push_back(std::move(inv));
  for (const auto& res : sub.results) {
    mdl::NextEntry n;
    n.on = {res.label};
    n.to = "TERMINATE";
    step.next.push_back(std::move(n));
  }
  w->steps.push_back(std::move(step));
  if (controlling->init == mdl::RoleDef::Init::Message) w->requester_role = reactive->name;
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

Agent::Agent(VehicleId id, IdleState idle, PlatoonInfo platoon,
             const mdl::CompiledBehaviour* behaviour, World* world, const RuntimeConfig* config)
    : id_(std::move(id)),
      idle_(idle),
      platoon_(std::move(platoon)),
      behaviour_(behaviour),
      world_(world),
      config_(config) {
  if (platoon_.members.empty()) platoon_ = solo_platoon(id_);
}

// --- entry points ----------------------------------------------------------

bool Agent::initiate(const ActionId& action, const std::map<std::string, VehicleId>& bindings,
                     std::map<std::string, PayloadValue> args) {
  if (idle_ != IdleState::PL) {
    warn("initiate " + action + ": only a platoon leader may start a manoeuvre");
    return false;
  }
  if (busy()) {
    warn("initiate " + action + ": already engaged");
    return false;
  }

  Pme p;
  p.action = action;
  if (const mdl::CompiledManoeuvre* man = behaviour_->manoeuvre(action)) {
    if (man->negotiated) {
      warn("initiate " + action + ": starts from a follower request, not from the leader");
      return false;
    }
    p.doc = man->doc;
  } else if (const mdl::MdlDocument* sub = behaviour_->registry->find(action)) {
    if (sub->kind != mdl::MdlDocument::Kind::SubManoeuvre) {
      warn("initiate " + action + ": unknown manoeuvre");
      return false;
    }
    const mdl::RoleDef* ctrl = sub->controlling_role();
    if (!ctrl || ctrl->init == mdl::RoleDef::Init::Message) {
      warn("initiate " + action + ": starts from a follower request, not from the leader");
      return false;
    }
    p.wrapper = wrap_sub(*sub);
    p.doc = p.wrapper.get();
  } else {
    warn("initiate " + action + ": unknown manoeuvre");
    return false;
  }

  p.script_args = std::move(args);
  for (const auto& r : p.doc->roles) {
    auto it = bindings.find(r.name);
    if (it == bindings.end()) {
      warn("initiate " + action + ": no vehicle bound to role " + r.name);
      return false;
    }
    auto pk = world_->peek(it->second);
    if (!pk) {
      warn("initiate " + action + ": unknown vehicle " + it->second);
      return false;
    }
    if (pk->idle != r.entry_state) {
      warn("initiate " + action + ": " + it->second + " is " + to_string(pk->idle) +
           ", role " + r.name + " expects " + to_string(r.entry_state));
      return false;
    }
    p.bindings[r.name] = it->second;
  }

  pme_ = std::move(p);
  enter_step(0);
  pme_check();
  return true;
}

bool Agent::request(const ActionId& action, const VehicleId& to,
                    std::map<std::string, PayloadValue> payload) {
  if (busy()) {
    warn("request " + action + ": already engaged");
    return false;
  }

  const mdl::CompiledBehaviour::Dispatch* d = nullptr;
  if (const mdl::CompiledManoeuvre* man = behaviour_->manoeuvre(action)) {
    if (!man->negotiated || man->doc->steps.empty() || man->doc->steps[0].invoke.empty()) {
      warn("request " + action + ": not a negotiated manoeuvre");
      return false;
    }
    auto it = behaviour_->requester.find(man->doc->steps[0].invoke[0].action);
    if (it != behaviour_->requester.end()) d = &it->second;
  } else {
    auto it = behaviour_->requester.find(action);
    if (it != behaviour_->requester.end()) d = &it->second;
  }
  if (!d) {
    warn("request " + action + ": no requester half defined");
    return false;
  }
  if (idle_ != d->role->entry_state) {
    warn("request " + action + ": requires " + to_string(d->role->entry_state) +
         ", currently " + to_string(idle_));
    return false;
  }

  Exec e;
  e.machine = sm::make_machine(*d->doc, *d->role);
  e.correlation = world_->fresh_correlation();
  e.counterpart = to;
  e.wire_action = action;
  e.args = std::move(payload);
  reactive_ = std::move(e);
  sm::StepOutput out = sm::start(reactive_->machine);
  execute(*reactive_, out);
  if (reactive_ && reactive_->machine.concluded) reactive_.reset();
  return true;
}

bool Agent::send_tmpl_split(const VehicleId& to) {
  Message m;
  m.kind = MessageKind::TMPL_SPLIT;
  m.action = "TMPL_SPLIT";
  m.from = id_;
  m.to = {to};
  m.correlation = world_->fresh_correlation();
  world_->send(std::move(m));
  return true;
}

// --- message dispatch -------------------------------------------------------

void Agent::on_message(const Message& m) {
  try {
    dispatch(m);
  } catch (const std::exception& ex) {
    warn(std::string("dropped ") + to_string(m.kind) + "/" + m.action + ": " + ex.what());
  }
}

void Agent::dispatch(const Message& m) {
  if (m.kind == MessageKind::TMPL_SPLIT) {
    handle_tmpl_split(m);
    return;
  }

  // running reactive instance
  if (reactive_ && m.correlation == reactive_->correlation) {
    for (const auto& [k, v] : m.payload) reactive_->payload[k] = v;
    if (!advance(*reactive_, sm::Event::message(m)))
      warn(to_string(m.kind) + "/" + m.action + " ignored in " + reactive_->machine.state);
    if (reactive_ && reactive_->machine.concluded) reactive_.reset();
    return;
  }

  // a child of the running manoeuvre
  if (pme_) {
    for (auto& child : pme_->children) {
      if (child.machine.concluded || child.correlation != m.correlation) continue;
      for (const auto& [k, v] : m.payload) child.payload[k] = v;
      if (!advance(child, sm::Event::message(m)))
        warn(to_string(m.kind) + "/" + m.action + " ignored in " + child.machine.state);
      pme_check();
      return;
    }
  }

  if (m.kind == MessageKind::REQ) {
    handle_request(m);
    return;
  }

  // fresh reactive instance triggered by this message
  const mdl::CompiledBehaviour::Dispatch* d = behaviour_->reactive_for(m.action, m.kind);
  if (d && d->role->part == mdl::RoleDef::Part::Reactive) {
    if (busy()) {
      warn("busy, dropping " + to_string(m.kind) + "/" + m.action);
      return;
    }
    if (idle_ != d->role->entry_state) {
      warn("dropping " + to_string(m.kind) + "/" + m.action + ": requires " +
           to_string(d->role->entry_state) + ", currently " + to_string(idle_));
      return;
    }
    Exec e;
    e.machine = sm::make_machine(*d->doc, *d->role);
    e.correlation = m.correlation;
    e.counterpart = m.from;
    e.wire_action = m.action;
    e.payload = m.payload;
    reactive_ = std::move(e);
    sm::start(reactive_->machine);  // rests at the notational entry state
    if (!advance(*reactive_, sm::Event::message(m))) {
      warn(to_string(m.kind) + "/" + m.action + " does not start " + d->doc->id);
      reactive_.reset();
      return;
    }
    if (reactive_ && reactive_->machine.concluded) reactive_.reset();
    return;
  }

  warn("unhandled " + to_string(m.kind) + "/" + m.action);
}

void Agent::handle_request(const Message& m) {
  if (idle_ != IdleState::PL) {
    reply_nack(m);
    warn("rejecting " + m.action + ": not a platoon leader");
    return;
  }
  if (busy()) {
    reply_nack(m);
    warn("rejecting " + m.action + ": already engaged");
    return;
  }

  if (const mdl::CompiledManoeuvre* man = behaviour_->manoeuvre(m.action)) {
    if (man->negotiated && start_negotiated(*man->doc, m.action, m)) return;
  } else if (const mdl::CompiledBehaviour::Dispatch* d =
                 behaviour_->reactive_for(m.action, MessageKind::REQ)) {
    // bare negotiated sub-manoeuvre: run it under a synthesized wrapper
    if (d->role->part == mdl::RoleDef::Part::Controlling) {
      auto w = wrap_sub(*d->doc);
      if (start_negotiated(*w, m.action, m)) {
        pme_->wrapper = std::move(w);
        return;
      }
    }
  }

  reply_nack(m);
  warn("rejecting " + m.action + ": nothing to negotiate");
}

bool Agent::start_negotiated(const mdl::MdlDocument& doc, const ActionId& action,
                             const Message& m) {
  if (!doc.requester_role || doc.steps.empty()) return false;

  Pme p;
  p.action = action;
  p.doc = &doc;
  p.request_payload = m.payload;
  p.adopted = m.correlation;
  p.bindings[*doc.requester_role] = m.from;

  bool accept = static_cast<int>(platoon_.members.size()) + 1 <= config_->max_platoon_size;

  // any further role is a platoon member picked by the requested position
  for (const auto& r : doc.roles) {
    if (r.name == *doc.requester_role) continue;
    int pos = -1;
    auto it = m.payload.find("position");
    if (it != m.payload.end() && std::holds_alternative<double>(it->second))
      pos = static_cast<int>(std::get<double>(it->second));
    if (pos >= 1 && pos < static_cast<int>(platoon_.members.size()))
      p.bindings[r.name] = platoon_.members[static_cast<std::size_t>(pos)];
    else
      accept = false;
  }
  if (!accept) warn("declining " + action + " from " + m.from);

  pme_ = std::move(p);
  enter_step(0);
  if (!pme_ || pme_->children.empty()) {
    pme_.reset();
    return false;
  }
  Exec& child = pme_->children.front();
  for (const auto& [k, v] : m.payload) child.payload[k] = v;
  if (!advance(child, sm::Event::message(m))) {
    warn(m.action + ": first step does not consume the request");
    pme_.reset();
    return false;
  }
  run_policy(child, accept);
  pme_check();
  return true;
}

void Agent::handle_tmpl_split(const Message& m) {
  if (idle_ != IdleState::TPL) {
    warn("split order while not a temporary leader");
    return;
  }
  // prefer the running instance's own abort path; it performs the split
  if (reactive_) {
    Message abt;
    abt.kind = MessageKind::ABT;
    abt.action = reactive_->wire_action;
    abt.from = m.from;
    abt.to = {id_};
    abt.correlation = reactive_->correlation;
    if (advance(*reactive_, sm::Event::message(abt))) {
      if (reactive_ && reactive_->machine.concluded) reactive_.reset();
      if (idle_ == IdleState::TPL) {
        do_bpl();
        warn("abort path left a temporary leader; split forced");
      }
      return;
    }
    if (reactive_->timer_seq) world_->cancel_timer(id_, reactive_->timer_seq);
    warn("dropping " + reactive_->machine.doc->id + " for a forced split");
    reactive_.reset();
  }
  do_bpl();
}

// --- timers and arrival ------------------------------------------------------

void Agent::on_timer(std::uint64_t seq) {
  try {
    if (seq != 0 && seq == idle_seq_) {
      idle_seq_ = 0;
      IdleState prev = idle_;
      idle_ = waiting_counterpart(idle_);
      warn("waited too long as " + to_string(prev) + ", back to " + to_string(idle_));
      return;
    }
    if (reactive_ && seq == reactive_->timer_seq) {
      reactive_->timer_seq = 0;
      if (!advance(*reactive_, sm::Event::timeout()))
        warn("timeout ignored in " + reactive_->machine.state);
      if (reactive_ && reactive_->machine.concluded) reactive_.reset();
      return;
    }
    if (pme_) {
      for (auto& child : pme_->children) {
        if (child.machine.concluded || child.timer_seq != seq) continue;
        child.timer_seq = 0;
        if (!advance(child, sm::Event::timeout()))
          warn("timeout ignored in " + child.machine.state);
        pme_check();
        return;
      }
    }
  } catch (const std::exception& ex) {
    warn(std::string("timer handling failed: ") + ex.what());
  }
}

void Agent::on_arrived() {
  try {
    if (reactive_ && sm::resting_state_handles(reactive_->machine, sm::Event::Kind::Arrived)) {
      advance(*reactive_, sm::Event::arrived());
      if (reactive_ && reactive_->machine.concluded) reactive_.reset();
      return;
    }
    if (pme_) {
      for (auto& child : pme_->children) {
        if (child.machine.concluded) continue;
        if (!sm::resting_state_handles(child.machine, sm::Event::Kind::Arrived)) continue;
        advance(child, sm::Event::arrived());
        pme_check();
        return;
      }
    }
  } catch (const std::exception& ex) {
    warn(std::string("arrival handling failed: ") + ex.what());
  }
}

// --- instance machinery -------------------------------------------------------

bool Agent::advance(Exec& e, const sm::Event& event) {
  sm::StepOutput out = sm::step(e.machine, event);
  if (!out.advanced) return false;
  execute(e, out);
  return true;
}

void Agent::execute(Exec& e, const sm::StepOutput& out) {
  if (!out.entered.empty() || out.result) {
    nlohmann::json f{{"action", e.machine.doc->id},
                     {"role", e.machine.role->name},
                     {"vehicle", id_}};
    if (!out.entered.empty()) f["entered"] = out.entered;
    if (out.result) f["result"] = *out.result;
    world_->trace({"transition", std::move(f)});
  }
  for (const mdl::PrimitiveDef* p : out.primitives) apply_primitive(e, *p);
  if (e.machine.concluded) conclude(e);
  else sync_timer(e);
}

void Agent::apply_primitive(Exec& e, const mdl::PrimitiveDef& p) {
  world_->trace({"primitive",
                 {{"action", e.machine.doc->id},
                  {"op", to_string(p.op)},
                  {"role", e.machine.role->name},
                  {"vehicle", id_}}});
  switch (p.op) {
    case PrimitiveOp::MTP: {
      MoveDirective d;
      d.target = p.target ? resolve_vehicle(*p.target, e) : id_;
      if (p.offset_m) d.offset_m = resolve_double(*p.offset_m, e);
      if (p.lane_offset) d.lane_offset = resolve_double(*p.lane_offset, e);
      world_->set_move(id_, d);
      break;
    }
    case PrimitiveOp::SH: {
      HeadwayDirective d;
      if (p.ahead) {
        d.ahead = resolve_vehicle(*p.ahead, e);
      } else {
        int pos = platoon_.position_of(id_);
        if (pos <= 0) {
          warn("SH without a predecessor");
          break;
        }
        d.ahead = platoon_.members[static_cast<std::size_t>(pos) - 1];
      }
      if (p.th_s) d.th_s = resolve_double(*p.th_s, e);
      if (p.space_m) d.space_m = resolve_double(*p.space_m, e);
      if (!d.th_s && !d.space_m) {
        // fall back to the platoon policy
        if (platoon_.th_s) d.th_s = platoon_.th_s;
        else d.space_m = platoon_.d;
      }
      world_->set_headway(id_, d);
      break;
    }
    case PrimitiveOp::BFV: do_bfv(); break;
    case PrimitiveOp::BPL: do_bpl(); break;
    case PrimitiveOp::BPF: do_bpf(e); break;
    case PrimitiveOp::BTL: do_btl(); break;
    case PrimitiveOp::SW:
      idle_ = waiting_counterpart(idle_);
      idle_seq_ = next_seq_++;
      world_->arm_timer(id_, idle_seq_, config_->idle_timeout_s);
      break;
    case PrimitiveOp::USW:
      if (idle_seq_) {
        world_->cancel_timer(id_, idle_seq_);
        idle_seq_ = 0;
      }
      idle_ = waiting_counterpart(idle_);
      break;
    case PrimitiveOp::W:
      break;  // the deadline is armed when the machine rests (sync_timer)
    case PrimitiveOp::SND: {
      if (!p.msg) break;
      const mdl::SndTemplate& t = *p.msg;
      Message m;
      m.kind = t.kind;
      m.action = t.action ? *t.action : e.wire_action;
      m.from = id_;
      m.to = {e.counterpart};
      m.correlation = e.correlation;
      if (kind_carries_payload(t.kind)) {
        if (t.forward_args) m.payload = e.args;
        else
          for (const auto& [k, v] : t.payload) m.payload[k] = resolve(v, e);
      }
      world_->send(std::move(m));
      break;
    }
    case PrimitiveOp::UPI: do_upi(e); break;
  }
}

void Agent::conclude(Exec& e) {
  if (e.timer_seq) {
    world_->cancel_timer(id_, e.timer_seq);
    e.timer_seq = 0;
  }
  const std::string& label = e.machine.result;
  if (const mdl::ResultDef* rd = e.machine.doc->result(label)) {
    auto it = rd->final_states.find(e.machine.role->name);
    if (it != rd->final_states.end() && idle_ != it->second) {
      warn(e.machine.doc->id + "/" + label + " declares " + to_string(it->second) +
           " but left " + to_string(idle_));
      idle_ = it->second;
    }
  }
  world_->clear_move(id_);  // positioning ends with the instance; headway persists
  trace_result(e, label);
}

void Agent::sync_timer(Exec& e) {
  if (e.timer_seq) {
    world_->cancel_timer(id_, e.timer_seq);
    e.timer_seq = 0;
  }
  if (auto deadline = sm::resting_timeout(e.machine, config_->default_timeout_s)) {
    e.timer_seq = next_seq_++;
    world_->arm_timer(id_, e.timer_seq, *deadline);
  }
}

void Agent::run_policy(Exec& e, bool accept) {
  while (!e.machine.concluded && sm::resting_state_handles(e.machine, sm::Event::Kind::Policy))
    if (!advance(e, sm::Event::policy(accept))) break;
}

// --- manoeuvre executor ------------------------------------------------------

void Agent::enter_step(std::size_t index) {
  Pme& p = *pme_;
  p.step = static_cast<int>(index);
  p.children.clear();
  const mdl::StepDef& step = p.doc->steps.at(index);

  for (const auto& inv : step.invoke) {
    const mdl::MdlDocument& sub = behaviour_->registry->at(inv.action);
    const mdl::RoleDef* ctrl = sub.controlling_role();
    if (!ctrl) throw DomainError(inv.action + ": no controlling role");

    VehicleId counterpart;
    for (const auto& [sub_role, man_role] : inv.participants) {
      if (sub_role == ctrl->name) continue;
      auto b = p.bindings.find(man_role);
      if (b == p.bindings.end()) throw DomainError(p.action + ": role " + man_role + " unbound");
      counterpart = b->second;
    }
    if (counterpart.empty()) throw DomainError(p.action + ": step " + step.id + " names no counterpart");

    Exec e;
    e.machine = sm::make_machine(sub, *ctrl);
    e.correlation = (index == 0 && p.adopted) ? p.adopted : world_->fresh_correlation();
    e.counterpart = counterpart;
    e.wire_action = (ctrl->init == mdl::RoleDef::Init::Message) ? p.action : sub.id;
    e.payload = p.request_payload;
    if (p.wrapper) {
      e.args = p.script_args;
    } else {
      for (const auto& [k, v] : inv.args) e.args[k] = resolve(v, e);
    }
    sm::StepOutput out = sm::start(e.machine);
    p.children.push_back(std::move(e));
    execute(p.children.back(), out);
  }
}

void Agent::pme_check() {
  while (pme_) {
    Pme& p = *pme_;
    if (p.step < 0 || p.children.empty()) return;
    for (const auto& c : p.children)
      if (!c.machine.concluded) return;

    std::vector<std::string> tuple;
    for (const auto& c : p.children) tuple.push_back(c.machine.result);
    const mdl::StepDef& step = p.doc->steps.at(static_cast<std::size_t>(p.step));
    world_->trace({"result",
                   {{"action", p.action},
                    {"labels", tuple},
                    {"scope", "step"},
                    {"step", step.id},
                    {"vehicle", id_}}});

    const mdl::NextEntry* match = nullptr;
    for (const auto& n : step.next)
      if (n.on == tuple) {
        match = &n;
        break;
      }
    if (!match) {
      warn(p.action + ": no branch for the step outcome");
      pme_.reset();
      return;
    }
    if (match->to == "TERMINATE") {
      world_->trace({"result",
                     {{"action", p.action},
                      {"labels", tuple},
                      {"scope", "manoeuvre"},
                      {"step", step.id},
                      {"vehicle", id_}}});
      pme_.reset();
      return;
    }
    bool found = false;
    std::size_t next_index = 0;
    for (std::size_t i = 0; i < p.doc->steps.size(); ++i)
      if (p.doc->steps[i].id == match->to) {
        next_index = i;
        found = true;
        break;
      }
    if (!found) {
      warn(p.action + ": unknown step " + match->to);
      pme_.reset();
      return;
    }
    enter_step(next_index);
  }
}

// --- structural primitives ----------------------------------------------------

void Agent::do_btl() {
  parent_platoon_ = platoon_;
  PlatoonInfo np;
  np.leader = id_;
  int pos = platoon_.position_of(id_);
  if (pos >= 0)
    np.members.assign(platoon_.members.begin() + pos, platoon_.members.end());
  else
    np.members = {id_};
  np.d = platoon_.d;
  np.D = platoon_.D;
  np.th_s = platoon_.th_s;
  platoon_ = std::move(np);
  idle_ = IdleState::TPL;
}

void Agent::do_bpl() {
  if (idle_ != IdleState::TPL) {
    // splitting from within: everything from this position back follows
    PlatoonInfo np;
    np.leader = id_;
    int pos = platoon_.position_of(id_);
    if (pos >= 0)
      np.members.assign(platoon_.members.begin() + pos, platoon_.members.end());
    else
      np.members = {id_};
    np.d = platoon_.d;
    np.D = platoon_.D;
    np.th_s = platoon_.th_s;
    platoon_ = std::move(np);
  }
  idle_ = IdleState::PL;
  parent_platoon_.reset();
  for (std::size_t i = 1; i < platoon_.members.size(); ++i)
    world_->adopt_platoon(platoon_.members[i], platoon_);
}

void Agent::do_bpf(const Exec& e) {
  if (idle_ == IdleState::TPL && parent_platoon_) {
    // the temporary split heals: fall back in behind the old predecessor
    platoon_ = *parent_platoon_;
    parent_platoon_.reset();
  } else if (!platoon_.contains(id_) || platoon_.leader == id_) {
    // joining: adopt the counterpart leader's view, slotting in behind the
    // announced predecessor when the instance carried one
    auto pk = world_->peek(e.counterpart);
    if (!pk) {
      warn("cannot join " + e.counterpart);
    } else {
      PlatoonInfo np = pk->platoon;
      if (!np.contains(id_)) {
        auto at = np.members.end();
        auto it = e.payload.find("ahead");
        if (it != e.payload.end() && std::holds_alternative<std::string>(it->second)) {
          int pos = np.position_of(std::get<std::string>(it->second));
          if (pos >= 0) at = np.members.begin() + pos + 1;
        }
        np.members.insert(at, id_);
      }
      platoon_ = std::move(np);
    }
  }
  idle_ = IdleState::PF;
}

void Agent::do_bfv() {
  PlatoonInfo np;
  np.leader = id_;
  np.members = {id_};
  np.d = platoon_.d;
  np.D = platoon_.D;
  np.th_s = platoon_.th_s;
  platoon_ = std::move(np);
  parent_platoon_.reset();
  idle_ = IdleState::FV;
  world_->clear_motion(id_);
}

void Agent::do_upi(const Exec& e) {
  PlatoonInfo np;
  np.leader = id_;
  np.members = {id_};
  np.d = platoon_.d;
  np.D = platoon_.D;
  np.th_s = platoon_.th_s;

  // keep every member that still answers to this platoon; a temporary
  // leader keeps its whole tail segment, untouched, under its own lead
  std::set<VehicleId> shielded;
  for (std::size_t i = 1; i < platoon_.members.size(); ++i) {
    const VehicleId& m = platoon_.members[i];
    if (m == id_ || shielded.count(m)) continue;
    auto pk = world_->peek(m);
    if (!pk) continue;
    if (pk->idle == IdleState::TPL && pk->platoon.leader == m) {
      // the counterpart of an aborted instance is splitting off for good;
      // any other temporary segment stays, untouched, under its own lead
      bool departing = (m == e.counterpart);
      for (const auto& t : pk->platoon.members) {
        shielded.insert(t);
        if (!departing && !np.contains(t)) np.members.push_back(t);
      }
      continue;
    }
    if (pk->platoon.leader != id_) continue;
    if (pk->idle == IdleState::FV || pk->idle == IdleState::PL) continue;
    np.members.push_back(m);
  }

  // a counterpart that just joined announces itself through its own view
  if (!e.counterpart.empty() && e.counterpart != id_ && !np.contains(e.counterpart)) {
    auto pk = world_->peek(e.counterpart);
    if (pk && pk->platoon.leader == id_ && pk->idle != IdleState::FV &&
        pk->idle != IdleState::PL && pk->idle != IdleState::TPL) {
      auto at = np.members.end();
      int self = pk->platoon.position_of(e.counterpart);
      if (self > 0) {
        int pos = np.position_of(pk->platoon.members[static_cast<std::size_t>(self) - 1]);
        if (pos >= 0) at = np.members.begin() + pos + 1;
      }
      np.members.insert(at, e.counterpart);
    }
  }

  platoon_ = std::move(np);
  for (std::size_t i = 1; i < platoon_.members.size(); ++i) {
    if (shielded.count(platoon_.members[i])) continue;  // keeps its temporary view
    world_->adopt_platoon(platoon_.members[i], platoon_);
  }
}

// --- parameter resolution -------------------------------------------------------

PayloadValue Agent::resolve(const mdl::ParamValue& p, const Exec& e) const {
  using mdl::ParamValue;
  if (std::holds_alternative<double>(p)) return std::get<double>(p);
  if (std::holds_alternative<bool>(p)) return std::get<bool>(p);
  if (std::holds_alternative<std::string>(p)) return std::get<std::string>(p);

  auto scaled = [](const PayloadValue& v, double scale) -> PayloadValue {
    if (std::holds_alternative<double>(v)) return std::get<double>(v) * scale;
    return v;
  };
  if (std::holds_alternative<mdl::ArgRef>(p)) {
    const auto& r = std::get<mdl::ArgRef>(p);
    auto it = e.args.find(r.key);
    if (it == e.args.end()) throw DomainError("missing argument " + r.key);
    return scaled(it->second, r.scale);
  }
  if (std::holds_alternative<mdl::PayloadRef>(p)) {
    const auto& r = std::get<mdl::PayloadRef>(p);
    auto it = e.payload.find(r.key);
    if (it == e.payload.end()) throw DomainError("missing payload field " + r.key);
    return scaled(it->second, r.scale);
  }
  if (std::holds_alternative<mdl::PlatoonRef>(p)) {
    const auto& r = std::get<mdl::PlatoonRef>(p);
    return (r.field == "spacing" ? platoon_.D : platoon_.d) * r.scale;
  }
  const auto& r = std::get<mdl::VehicleRef>(p);
  switch (r.kind) {
    case mdl::VehicleRef::Kind::Role: {
      if (!pme_) throw DomainError("role reference outside a manoeuvre");
      auto it = pme_->bindings.find(r.name);
      if (it == pme_->bindings.end()) throw DomainError("unbound role " + r.name);
      return it->second;
    }
    case mdl::VehicleRef::Kind::PlatoonAnchor:
      if (platoon_.members.empty()) throw DomainError("empty platoon");
      return r.name == "tail" ? platoon_.members.back() : platoon_.members.front();
    case mdl::VehicleRef::Kind::PredecessorOf: {
      if (!pme_) throw DomainError("role reference outside a manoeuvre");
      auto it = pme_->bindings.find(r.name);
      if (it == pme_->bindings.end()) throw DomainError("unbound role " + r.name);
      int pos = platoon_.position_of(it->second);
      if (pos <= 0) throw DomainError(it->second + " has no predecessor");
      return platoon_.members[static_cast<std::size_t>(pos) - 1];
    }
  }
  throw DomainError("unresolvable parameter");
}

VehicleId Agent::resolve_vehicle(const mdl::ParamValue& p, const Exec& e) const {
  PayloadValue v = resolve(p, e);
  if (!std::holds_alternative<std::string>(v)) throw DomainError("vehicle parameter is not an id");
  std::string s = std::get<std::string>(v);
  return s == "self" ? id_ : VehicleId(std::move(s));
}

double Agent::resolve_double(const mdl::ParamValue& p, const Exec& e) const {
  PayloadValue v = resolve(p, e);
  if (!std::holds_alternative<double>(v)) throw DomainError("parameter is not a number");
  return std::get<double>(v);
}

// --- bookkeeping ----------------------------------------------------------------

void Agent::warn(const std::string& message) {
  world_->trace({"warning", {{"message", message}, {"vehicle", id_}}});
}

void Agent::trace_result(const Exec& e, const std::string& label) {
  world_->trace({"result",
                 {{"action", e.machine.doc->id},
                  {"final", to_string(idle_)},
                  {"label", label},
                  {"role", e.machine.role->name},
                  {"scope", "instance"},
                  {"vehicle", id_}}});
}

void Agent::reply_nack(const Message& m) {
  Message r;
  r.kind = MessageKind::NACK;
  r.action = m.action;
  r.from = id_;
  r.to = {m.from};
  r.correlation = m.correlation;
  world_->send(std::move(r));
}

}  // namespace sead::rt
