#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sead/core.hpp"

// Manoeuvre Design Language: JSON documents describing sub-manoeuvres
// (per-role communicating state machines) and manoeuvres (result-conditioned
// chains of sub-manoeuvre invocations). One document per file, canonical
// serialization, strict schema.

namespace sead::mdl {

inline constexpr const char* kMdlVersion = "1";
inline constexpr const char* kFileExtension = ".mdl.json";

// ---------------------------------------------------------------------------
// Parameter values
// ---------------------------------------------------------------------------

// A parameter is a literal or a $-reference resolved when the owning
// primitive executes (or, for step args, when the step starts).
struct ArgRef {
  std::string key;
  double scale = 1.0;
};
struct PayloadRef {
  std::string key;
  double scale = 1.0;
};
struct PlatoonRef {
  std::string field;  // "d" or "D"
  double scale = 1.0;
};
struct VehicleRef {
  enum class Kind { Role, PlatoonAnchor, PredecessorOf } kind = Kind::Role;
  std::string name;  // role name, or "tail"/"leader" for anchors
};

using ParamValue =
    std::variant<double, bool, std::string, ArgRef, PayloadRef, PlatoonRef, VehicleRef>;

// ---------------------------------------------------------------------------
// Event patterns
// ---------------------------------------------------------------------------

struct EventPattern {
  enum class Kind { Msg, Timeout, Arrived, Done, Policy };
  Kind kind = Kind::Done;
  std::optional<MessageKind> msg_kind;   // Msg
  std::optional<ActionId> msg_action;    // Msg: "KIND/ACTION" form
  std::optional<double> timeout_s;       // Timeout: inline deadline
  bool policy_accept = true;             // Policy
};

// ---------------------------------------------------------------------------
// Sub-manoeuvre bodies
// ---------------------------------------------------------------------------

struct SndTemplate {
  MessageKind kind = MessageKind::DN;
  std::string to_role;
  std::optional<ActionId> action;  // defaults to the instance action
  std::map<std::string, ParamValue> payload;
  bool forward_args = false;  // payload: {"$forward": "args"}
};

struct PrimitiveDef {
  PrimitiveOp op = PrimitiveOp::W;
  // MTP
  std::optional<ParamValue> target;  // vehicle ref/payload ref/"self"
  std::optional<ParamValue> offset_m;
  std::optional<ParamValue> lane_offset;
  // SH (exactly one of th_s / space_m)
  std::optional<ParamValue> th_s;
  std::optional<ParamValue> space_m;
  std::optional<ParamValue> ahead;  // intended predecessor; defaults physical
  // W
  std::optional<EventPattern> wait_for;  // descriptive; transitions operate
  std::optional<double> timeout_s;
  // SND
  std::optional<SndTemplate> msg;
};

struct TransitionDef {
  EventPattern on;
  bool to_result = false;
  std::string to;  // state id, or result label when to_result
};

struct StateDef {
  std::vector<PrimitiveDef> primitives;
  std::vector<TransitionDef> transitions;  // first match wins
};

struct RoleDef {
  std::string name;
  IdleState entry_state = IdleState::FV;
  enum class Part { Controlling, Reactive };
  Part part = Part::Reactive;
  std::string start;  // initial machine state (sub-manoeuvre roles)
  enum class Init { Direct, Message };
  Init init = Init::Message;  // defaulted by part when absent in JSON
  bool init_explicit = false;
};

struct ResultDef {
  std::string label;
  std::map<std::string, IdleState> final_states;  // role → declared idle
};

// ---------------------------------------------------------------------------
// Manoeuvre bodies
// ---------------------------------------------------------------------------

struct StepInvocation {
  ActionId action;
  std::map<std::string, std::string> participants;  // sub role → manoeuvre role
  std::map<std::string, ParamValue> args;
};

struct NextEntry {
  std::vector<std::string> on;  // result labels, one per invocation
  std::string to;               // step id or "TERMINATE"
};

struct StepDef {
  std::string id;
  bool sim = false;
  std::vector<StepInvocation> invoke;  // 1 entry, or >=2 when sim
  std::vector<NextEntry> next;
};

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

struct MdlDocument {
  std::string version = kMdlVersion;
  ActionId id;
  enum class Kind { SubManoeuvre, Manoeuvre };
  Kind kind = Kind::SubManoeuvre;
  std::vector<RoleDef> roles;

  // sub-manoeuvre body
  std::vector<std::string> args;  // formal parameters the states may $arg
  std::map<std::string, std::map<std::string, StateDef>> states;  // role → id → state
  std::vector<ResultDef> results;

  // manoeuvre body
  std::vector<StepDef> steps;
  std::optional<std::string> requester_role;

  const RoleDef* role(const std::string& name) const;
  const RoleDef* controlling_role() const;
  const StateDef* state(const std::string& role, const std::string& id) const;
  const ResultDef* result(const std::string& label) const;
  const StepDef* step(const std::string& id) const;
};

// Documents compare equal when their canonical serializations match.
bool operator==(const MdlDocument& a, const MdlDocument& b);
inline bool operator!=(const MdlDocument& a, const MdlDocument& b) { return !(a == b); }

// ---------------------------------------------------------------------------
// Parse / serialize
// ---------------------------------------------------------------------------

struct MdlError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : MdlError {  // malformed JSON
  ParseError(const std::string& msg, int line, int col);
  int line = 0;
  int col = 0;
};
struct SchemaError : MdlError {  // well-formed JSON, wrong shape
  SchemaError(const std::string& msg, std::string path);
  std::string path;
};

MdlDocument parse_document(const std::string& text);
MdlDocument load_document(const std::string& file_path);  // adds IO errors

// Canonical bytes: two-space indent, keys sorted, trailing newline.
// serialize(parse(serialize(d))) == serialize(d).
std::string serialize_document(const MdlDocument& doc);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

class Registry {
 public:
  // Rejects duplicate ids.
  void add(MdlDocument doc);
  bool contains(const ActionId& id) const;
  const MdlDocument* find(const ActionId& id) const;
  const MdlDocument& at(const ActionId& id) const;  // throws DomainError
  std::vector<ActionId> ids() const;                // sorted
  std::size_t size() const { return docs_.size(); }

 private:
  std::map<ActionId, MdlDocument> docs_;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string rule;     // stable id, e.g. "PRIMITIVE_ACTOR_VIOLATION"
  std::string path;     // document location, e.g. "GAPCLOSE/states/B/close"
  std::string message;  // human-readable explanation
};

bool has_errors(const std::vector<Diagnostic>& diags);
bool has_rule(const std::vector<Diagnostic>& diags, const std::string& rule);

// Stable rule ids used by validate/compile (verification adds its own).
namespace rules {
inline constexpr const char* kActorViolation = "PRIMITIVE_ACTOR_VIOLATION";
inline constexpr const char* kResultStateMismatch = "RESULT_STATE_MISMATCH";
inline constexpr const char* kUnreachableResult = "UNREACHABLE_RESULT";
inline constexpr const char* kTransitionDeadEnd = "TRANSITION_DEAD_END";
inline constexpr const char* kUnknownTarget = "TRANSITION_UNKNOWN_TARGET";
inline constexpr const char* kRoleShape = "ROLE_SHAPE";
inline constexpr const char* kWaitShape = "WAIT_SHAPE";
inline constexpr const char* kSndShape = "SND_SHAPE";
inline constexpr const char* kPayloadForbidden = "MESSAGE_PAYLOAD_FORBIDDEN";
inline constexpr const char* kTriggerKind = "TRIGGER_KIND";
inline constexpr const char* kPayloadRefUnknown = "PAYLOAD_REF_UNKNOWN";
inline constexpr const char* kParamShape = "PARAM_SHAPE";
inline constexpr const char* kResultShape = "RESULT_SHAPE";
inline constexpr const char* kStepShape = "STEP_SHAPE";
inline constexpr const char* kResultCoverageMissing = "RESULT_COVERAGE_MISSING";
inline constexpr const char* kUnresolvedReference = "UNRESOLVED_REFERENCE";
inline constexpr const char* kSimParticipantOverlap = "SIM_PARTICIPANT_OVERLAP";
inline constexpr const char* kSimShape = "SIM_SHAPE";
inline constexpr const char* kBindingMissing = "BINDING_MISSING";
inline constexpr const char* kManoeuvreCycle = "MANOEUVRE_CYCLE";
inline constexpr const char* kRequesterShape = "REQUESTER_SHAPE";
inline constexpr const char* kEntryMismatch = "STEP_ENTRY_MISMATCH";
inline constexpr const char* kIdShape = "ID_SHAPE";
inline constexpr const char* kArgsMismatch = "ARGS_MISMATCH";
inline constexpr const char* kPayloadKeyUnused = "PAYLOAD_KEY_UNUSED";
}  // namespace rules

// Structural and semantic checks of a single document. Cross-document
// references are checked when a registry is supplied.
std::vector<Diagnostic> validate(const MdlDocument& doc, const Registry* registry = nullptr);

// ---------------------------------------------------------------------------
// Compiled behaviour
// ---------------------------------------------------------------------------

struct CompiledStep {
  const StepDef* def = nullptr;
  std::vector<const MdlDocument*> invoked;       // one per invocation
  std::map<std::vector<std::string>, int> next;  // result tuple → step index, -1 = TERMINATE
};

struct CompiledManoeuvre {
  const MdlDocument* doc = nullptr;
  std::vector<CompiledStep> steps;
  bool negotiated = false;  // first step's controlling half is REQ-initiated
};

struct CompiledBehaviour {
  const Registry* registry = nullptr;  // must outlive the compiled behaviour

  struct Dispatch {
    const MdlDocument* doc = nullptr;
    const RoleDef* role = nullptr;
  };

  std::map<ActionId, CompiledManoeuvre> manoeuvres;
  // Message-initiated reactive halves, keyed by (action, trigger kind).
  std::map<std::pair<ActionId, MessageKind>, Dispatch> reactive;
  // Direct-initiated (requester) halves by action.
  std::map<ActionId, Dispatch> requester;

  const CompiledManoeuvre* manoeuvre(const ActionId& id) const;
  const Dispatch* reactive_for(const ActionId& action, MessageKind kind) const;
};

struct CompileResult {
  CompiledBehaviour behaviour;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return !has_errors(diagnostics); }
};

// Validates every document, resolves manoeuvre references, builds dispatch
// tables. Error diagnostics leave the affected entries out of the tables.
CompileResult compile(const Registry& registry);

// Rendering helpers shared by the CLI and tests.
std::string to_string(const Diagnostic& d);
std::string pattern_to_string(const EventPattern& p);

}  // namespace sead::mdl
