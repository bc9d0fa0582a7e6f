#include "sead/statemachine.hpp"

namespace sead::sm {

Event Event::message(Message m) {
  Event e;
  e.kind = Kind::Msg;
  e.msg = std::move(m);
  return e;
}
Event Event::timeout() { return Event{Kind::Timeout, std::nullopt, false}; }
Event Event::arrived() { return Event{Kind::Arrived, std::nullopt, false}; }
Event Event::policy(bool accept) { return Event{Kind::Policy, std::nullopt, accept}; }

bool matches(const mdl::EventPattern& pattern, const Event& event) {
  using PK = mdl::EventPattern::Kind;
  switch (pattern.kind) {
    case PK::Msg:
      return event.kind == Event::Kind::Msg && event.msg &&
             event.msg->kind == *pattern.msg_kind &&
             (!pattern.msg_action || *pattern.msg_action == event.msg->action);
    case PK::Timeout:
      return event.kind == Event::Kind::Timeout;
    case PK::Arrived:
      return event.kind == Event::Kind::Arrived;
    case PK::Policy:
      return event.kind == Event::Kind::Policy && event.policy_accept == pattern.policy_accept;
    case PK::Done:
      return false;  // internal chaining only
  }
  return false;
}

namespace {

const mdl::StateDef* current_state(const RoleMachine& m) {
  return m.doc->state(m.role->name, m.state);
}

void conclude(RoleMachine& m, const std::string& label, StepOutput& out) {
  m.concluded = true;
  m.result = label;
  out.result = label;
}

// Enter a state: collect its primitives, then chain through immediate done
// transitions until the machine rests in a waiting state or concludes.
void enter(RoleMachine& m, const std::string& state_id, StepOutput& out) {
  m.state = state_id;
  out.entered.push_back(state_id);
  const mdl::StateDef* s = current_state(m);
  if (!s) throw DomainError(m.doc->id + ": undefined state " + state_id);
  for (const auto& p : s->primitives) out.primitives.push_back(&p);
  if (s->transitions.size() == 1 && s->transitions[0].on.kind == mdl::EventPattern::Kind::Done) {
    const mdl::TransitionDef& t = s->transitions[0];
    if (t.to_result) {
      conclude(m, t.to, out);
    } else {
      enter(m, t.to, out);
    }
  }
}

}  // namespace

RoleMachine make_machine(const mdl::MdlDocument& doc, const mdl::RoleDef& role) {
  RoleMachine m;
  m.doc = &doc;
  m.role = &role;
  m.state = role.start;
  return m;
}

StepOutput start(RoleMachine& m) {
  StepOutput out;
  if (m.started || m.concluded) return out;
  m.started = true;
  out.advanced = true;
  if (m.role->init == mdl::RoleDef::Init::Message) {
    // notational entry: rests until the triggering message arrives
    out.entered.push_back(m.state);
    return out;
  }
  enter(m, m.role->start, out);
  return out;
}

StepOutput step(RoleMachine& m, const Event& event) {
  StepOutput out;
  if (!m.started || m.concluded) return out;
  const mdl::StateDef* s = current_state(m);
  if (!s) return out;
  for (const auto& t : s->transitions) {
    if (!matches(t.on, event)) continue;
    out.advanced = true;
    if (t.to_result) {
      conclude(m, t.to, out);
    } else {
      enter(m, t.to, out);
    }
    return out;
  }
  return out;
}

std::optional<double> resting_timeout(const RoleMachine& m, double default_timeout_s) {
  if (m.concluded || !m.started) return std::nullopt;
  const mdl::StateDef* s = current_state(m);
  if (!s) return std::nullopt;
  const mdl::TransitionDef* timeout_transition = nullptr;
  for (const auto& t : s->transitions) {
    if (t.on.kind == mdl::EventPattern::Kind::Timeout) timeout_transition = &t;
  }
  if (!timeout_transition) return std::nullopt;
  for (const auto& p : s->primitives) {
    if (p.op == PrimitiveOp::W && p.timeout_s) return *p.timeout_s;
  }
  if (timeout_transition->on.timeout_s) return *timeout_transition->on.timeout_s;
  return default_timeout_s;
}

bool resting_state_handles(const RoleMachine& m, Event::Kind kind) {
  if (m.concluded || !m.started) return false;
  const mdl::StateDef* s = current_state(m);
  if (!s) return false;
  for (const auto& t : s->transitions) {
    using PK = mdl::EventPattern::Kind;
    switch (t.on.kind) {
      case PK::Msg:
        if (kind == Event::Kind::Msg) return true;
        break;
      case PK::Timeout:
        if (kind == Event::Kind::Timeout) return true;
        break;
      case PK::Arrived:
        if (kind == Event::Kind::Arrived) return true;
        break;
      case PK::Policy:
        if (kind == Event::Kind::Policy) return true;
        break;
      case PK::Done:
        break;
    }
  }
  return false;
}

}  // namespace sead::sm
