#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sead/core.hpp"
#include "sead/mdl.hpp"

// Static analysis of catalogue documents: exhaustive exploration of the
// communicating role machines of a sub-manoeuvre, outcome enumeration, and
// stability of everything a manoeuvre can leave behind.

namespace sead::verify {

namespace rules {
inline constexpr const char* kDeadlockRisk = "DEADLOCK_RISK";
inline constexpr const char* kStateExplosion = "STATE_EXPLOSION";
inline constexpr const char* kStabilityTerminalUnstable = "STABILITY_TERMINAL_UNSTABLE";
}  // namespace rules

// One way a sub-manoeuvre can conclude across all participants.
struct Outcome {
  std::map<std::string, std::string> labels;  // role → result label
  std::map<std::string, IdleState> finals;    // role → declared final idle

  auto operator<=>(const Outcome&) const = default;
};

std::string to_string(const Outcome& o);

struct Exploration {
  std::vector<mdl::Diagnostic> diagnostics;
  std::set<Outcome> outcomes;
  std::size_t configs = 0;  // distinct reachable configurations
};

// Exhaustively explores the asynchronous product of the role machines over a
// lossless channel. Nondeterministic branches follow a fixed race discipline:
//   - a deliverable matching message beats arrived/timeout branches,
//   - of all pending waits, only the earliest deadline may time out,
//   - both policy decisions are explored,
//   - messages nobody can consume are dropped.
// Reports DEADLOCK_RISK for configurations that cannot reach any outcome and
// STATE_EXPLOSION when the configuration bound is exceeded.
Exploration explore(const mdl::MdlDocument& sub);

// Diagnostics only (empty means every interleaving concludes).
std::vector<mdl::Diagnostic> check_synchronisation(const mdl::MdlDocument& sub);

// All conclusions the message race can produce.
std::set<Outcome> enumerate_outcomes(const mdl::MdlDocument& sub);

// Per-role view of the outcomes: (role, label, final idle) triples. A
// simulated participant's conclusion must appear here even when an injected
// fault made the two halves conclude differently.
std::set<std::tuple<std::string, std::string, IdleState>> role_projections(
    const mdl::MdlDocument& sub);

// Result tuples a simultaneous step can produce (Cartesian product of the
// invoked sub-manoeuvres' controlling-side labels).
std::set<std::vector<std::string>> sim_tuples(const mdl::MdlDocument& manoeuvre,
                                              const std::string& step_id,
                                              const mdl::Registry& registry);

// Sub-manoeuvre: no declared final may leave a participant as a transient
// leader. Manoeuvre: walks every step path applying declared finals and flags
// TERMINATE points that leave any tracked role unstable, plus steps whose
// expected entry idle state cannot match what earlier steps left behind.
std::vector<mdl::Diagnostic> check_stability(const mdl::MdlDocument& doc,
                                             const mdl::Registry* registry);

// validate + synchronisation + stability for one document.
std::vector<mdl::Diagnostic> verify_document(const mdl::MdlDocument& doc,
                                             const mdl::Registry* registry);

}  // namespace sead::verify
