#include "sead/core.hpp"

namespace sead {

bool is_stable(IdleState s) {
  switch (s) {
    case IdleState::FV:
    case IdleState::PF:
    case IdleState::PL:
      return true;
    case IdleState::WFV:
    case IdleState::WPF:
    case IdleState::WPL:
    case IdleState::TPL:
      return false;
  }
  throw DomainError("is_stable: bad idle state");
}

IdleState waiting_counterpart(IdleState s) {
  switch (s) {
    case IdleState::FV:  return IdleState::WFV;
    case IdleState::PF:  return IdleState::WPF;
    case IdleState::PL:  return IdleState::WPL;
    case IdleState::WFV: return IdleState::FV;
    case IdleState::WPF: return IdleState::PF;
    case IdleState::WPL: return IdleState::PL;
    case IdleState::TPL:
      throw DomainError("waiting_counterpart: TPL has no counterpart");
  }
  throw DomainError("waiting_counterpart: bad idle state");
}

std::string to_string(IdleState s) {
  switch (s) {
    case IdleState::FV:  return "FV";
    case IdleState::PF:  return "PF";
    case IdleState::PL:  return "PL";
    case IdleState::WFV: return "WFV";
    case IdleState::WPF: return "WPF";
    case IdleState::WPL: return "WPL";
    case IdleState::TPL: return "TPL";
  }
  throw DomainError("to_string: bad idle state");
}

std::optional<IdleState> idle_state_from(const std::string& name) {
  for (IdleState s : kAllIdleStates)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

std::string to_string(MessageKind k) {
  switch (k) {
    case MessageKind::REQ:        return "REQ";
    case MessageKind::ORD:        return "ORD";
    case MessageKind::ACK:        return "ACK";
    case MessageKind::NACK:       return "NACK";
    case MessageKind::DN:         return "DN";
    case MessageKind::ABT:        return "ABT";
    case MessageKind::TMPL_SPLIT: return "TMPL_SPLIT";
  }
  throw DomainError("to_string: bad message kind");
}

std::optional<MessageKind> message_kind_from(const std::string& name) {
  for (MessageKind k : kAllMessageKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

bool kind_carries_payload(MessageKind k) {
  return k == MessageKind::REQ || k == MessageKind::ORD || k == MessageKind::DN;
}

std::optional<std::string> message_violation(const Message& m) {
  if (m.to.empty()) return "message has no receivers";
  if (!m.payload.empty() && !kind_carries_payload(m.kind))
    return "payload not allowed on " + to_string(m.kind);
  for (const auto& r : m.to)
    if (r.empty()) return "empty receiver id";
  if (m.from.empty()) return "empty sender id";
  return std::nullopt;
}

std::string to_string(PrimitiveOp op) {
  switch (op) {
    case PrimitiveOp::MTP: return "MTP";
    case PrimitiveOp::SH:  return "SH";
    case PrimitiveOp::BFV: return "BFV";
    case PrimitiveOp::BPL: return "BPL";
    case PrimitiveOp::BPF: return "BPF";
    case PrimitiveOp::BTL: return "BTL";
    case PrimitiveOp::SW:  return "SW";
    case PrimitiveOp::USW: return "USW";
    case PrimitiveOp::W:   return "W";
    case PrimitiveOp::SND: return "SND";
    case PrimitiveOp::UPI: return "UPI";
  }
  throw DomainError("to_string: bad primitive");
}

std::optional<PrimitiveOp> primitive_op_from(const std::string& name) {
  for (PrimitiveOp op : kAllPrimitiveOps)
    if (to_string(op) == name) return op;
  return std::nullopt;
}

bool primitive_allowed(PrimitiveOp op, IdleState actor) {
  using I = IdleState;
  switch (op) {
    case PrimitiveOp::MTP:
      return actor == I::FV || actor == I::PL || actor == I::TPL;
    case PrimitiveOp::SH:
      return actor == I::PF || actor == I::TPL;
    case PrimitiveOp::BFV:
      return actor != I::FV;
    case PrimitiveOp::BPL:
      return actor != I::PL;
    case PrimitiveOp::BPF:
      return actor != I::PF;
    case PrimitiveOp::BTL:
      return actor != I::TPL;
    case PrimitiveOp::SW:
      return actor == I::FV || actor == I::PL || actor == I::PF;
    case PrimitiveOp::USW:
      return actor == I::WFV || actor == I::WPL || actor == I::WPF;
    case PrimitiveOp::W:
    case PrimitiveOp::SND:
      return true;
    case PrimitiveOp::UPI:
      return actor == I::PL;
  }
  throw DomainError("primitive_allowed: bad primitive");
}

bool is_result_label(const std::string& label) {
  if (label == "RS") return true;
  if (label.size() < 3 || label[0] != 'R' || label[1] != 'A') return false;
  if (label[2] == '0') return false;  // no leading zero, RA1 upward
  for (std::size_t i = 2; i < label.size(); ++i)
    if (label[i] < '0' || label[i] > '9') return false;
  return true;
}

bool is_success_label(const std::string& label) { return label == "RS"; }

}  // namespace sead
