#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// Core vocabulary shared by every layer: idle states, message kinds,
// action primitives and their actor table, result labels, messages.

namespace sead {

using VehicleId = std::string;
using ActionId = std::string;
using CorrelationId = std::uint64_t;

// ---------------------------------------------------------------------------
// Idle states
// ---------------------------------------------------------------------------

// Stable states may dwell indefinitely; the waiting counterparts mark a
// vehicle that is mid-manoeuvre and closed to new LLI initiations. TPL is
// the split-safe holder used while a follower manipulates its gap.
enum class IdleState : std::uint8_t {
  FV,   // free vehicle
  PF,   // platoon follower
  PL,   // platoon leader
  WFV,  // waiting free vehicle
  WPF,  // waiting platoon follower
  WPL,  // waiting platoon leader
  TPL,  // temporary platoon leader
};

inline constexpr IdleState kAllIdleStates[] = {
    IdleState::FV,  IdleState::PF,  IdleState::PL, IdleState::WFV,
    IdleState::WPF, IdleState::WPL, IdleState::TPL};

bool is_stable(IdleState s);

// Toggles FV<->WFV, PF<->WPF, PL<->WPL. TPL has no counterpart and is
// rejected; the mapping is an involution on the remaining six states.
IdleState waiting_counterpart(IdleState s);

std::string to_string(IdleState s);
std::optional<IdleState> idle_state_from(const std::string& name);

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

enum class MessageKind : std::uint8_t {
  REQ,         // request a manoeuvre
  ORD,         // order a sub-manoeuvre
  ACK,         // acknowledge a request
  NACK,        // refuse a request
  DN,          // done
  ABT,         // abort
  TMPL_SPLIT,  // force a temporary platoon leader to split
};

inline constexpr MessageKind kAllMessageKinds[] = {
    MessageKind::REQ, MessageKind::ORD, MessageKind::ACK, MessageKind::NACK,
    MessageKind::DN,  MessageKind::ABT, MessageKind::TMPL_SPLIT};

std::string to_string(MessageKind k);
std::optional<MessageKind> message_kind_from(const std::string& name);

// Only REQ, ORD and DN may carry a payload beyond the action id and
// correlation id.
bool kind_carries_payload(MessageKind k);

// Payload values are scalars or vehicle-id lists.
using PayloadValue = std::variant<double, bool, std::string, std::vector<VehicleId>>;
using Payload = std::map<std::string, PayloadValue>;

struct Message {
  MessageKind kind{MessageKind::REQ};
  ActionId action;                  // sub-manoeuvre or requested manoeuvre id
  VehicleId from;
  std::vector<VehicleId> to;        // non-empty; unicast unless broadcast
  CorrelationId correlation{0};     // shared by all messages of one instance
  Payload payload;
};

// Structural check of the message invariants (non-empty receivers,
// payload only on kinds that allow it). Returns a description of the first
// violation, or nullopt when well-formed.
std::optional<std::string> message_violation(const Message& m);

// ---------------------------------------------------------------------------
// Action primitives
// ---------------------------------------------------------------------------

enum class PrimitiveOp : std::uint8_t {
  MTP,  // move to position (target + relative offset, metres and lane)
  SH,   // set headway (time or space) to a preceding vehicle
  BFV,  // become free vehicle
  BPL,  // become platoon leader (a TPL splits, taking downstream members)
  BPF,  // become platoon follower
  BTL,  // become temporary platoon leader
  SW,   // switch into the waiting counterpart
  USW,  // switch back from the waiting counterpart
  W,    // wait for an event, optionally bounded by a timeout
  SND,  // send a V2V message
  UPI,  // update platoon information (leaders only)
};

inline constexpr PrimitiveOp kAllPrimitiveOps[] = {
    PrimitiveOp::MTP, PrimitiveOp::SH,  PrimitiveOp::BFV, PrimitiveOp::BPL,
    PrimitiveOp::BPF, PrimitiveOp::BTL, PrimitiveOp::SW,  PrimitiveOp::USW,
    PrimitiveOp::W,   PrimitiveOp::SND, PrimitiveOp::UPI};

std::string to_string(PrimitiveOp op);
std::optional<PrimitiveOp> primitive_op_from(const std::string& name);

// Actor table: which idle states may execute a primitive.
bool primitive_allowed(PrimitiveOp op, IdleState actor);

// ---------------------------------------------------------------------------
// Result labels
// ---------------------------------------------------------------------------

// "RS" is the success label; aborts are "RA1", "RA2", ... in declaration
// order.
bool is_result_label(const std::string& label);
bool is_success_label(const std::string& label);

// Error type for precondition violations in the core API.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace sead
