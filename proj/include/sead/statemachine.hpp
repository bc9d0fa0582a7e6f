#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sead/core.hpp"
#include "sead/mdl.hpp"

// Execution of a single role's machine inside one sub-manoeuvre instance.
// Pure: feeding an event returns the primitives to perform; side effects
// (sending, timers, motion targets) are the caller's job.

namespace sead::sm {

struct Event {
  enum class Kind { Msg, Timeout, Arrived, Policy };
  Kind kind = Kind::Timeout;
  std::optional<Message> msg;
  bool policy_accept = false;

  static Event message(Message m);
  static Event timeout();
  static Event arrived();
  static Event policy(bool accept);
};

bool matches(const mdl::EventPattern& pattern, const Event& event);

struct RoleMachine {
  const mdl::MdlDocument* doc = nullptr;
  const mdl::RoleDef* role = nullptr;
  std::string state;
  bool started = false;
  bool concluded = false;
  std::string result;  // label once concluded
};

struct StepOutput {
  bool advanced = false;
  // primitives to perform now, in order (done-chained states included)
  std::vector<const mdl::PrimitiveDef*> primitives;
  std::vector<std::string> entered;  // states entered, in order
  std::optional<std::string> result;
};

RoleMachine make_machine(const mdl::MdlDocument& doc, const mdl::RoleDef& role);

// Enter the start state. Message-initiated roles idle until their trigger;
// direct-initiated roles execute the start state's primitives immediately.
StepOutput start(RoleMachine& m);

// Feed one event. advanced=false when nothing in the current state matches.
StepOutput step(RoleMachine& m, const Event& event);

// Deadline for the state the machine is resting in, if it can time out:
// W timeout, else the transition's inline timeout, else the controlling-side
// default. nullopt when the state has no timeout transition.
std::optional<double> resting_timeout(const RoleMachine& m, double default_timeout_s);

// True if the machine's resting state has a transition for this event kind
// (used to decide whether an arrived event is consumed or latched).
bool resting_state_handles(const RoleMachine& m, Event::Kind kind);

}  // namespace sead::sm
