#include <doctest.h>

#include "sead/core.hpp"

using namespace sead;

TEST_CASE("idle states partition into stable and unstable") {
  CHECK(is_stable(IdleState::FV));
  CHECK(is_stable(IdleState::PF));
  CHECK(is_stable(IdleState::PL));
  CHECK(!is_stable(IdleState::WFV));
  CHECK(!is_stable(IdleState::WPF));
  CHECK(!is_stable(IdleState::WPL));
  CHECK(!is_stable(IdleState::TPL));
}

TEST_CASE("waiting counterpart is an involution over six states") {
  CHECK(waiting_counterpart(IdleState::FV) == IdleState::WFV);
  CHECK(waiting_counterpart(IdleState::PF) == IdleState::WPF);
  CHECK(waiting_counterpart(IdleState::PL) == IdleState::WPL);
  for (IdleState s : kAllIdleStates) {
    if (s == IdleState::TPL) continue;
    CHECK(waiting_counterpart(waiting_counterpart(s)) == s);
  }
  CHECK_THROWS_AS(waiting_counterpart(IdleState::TPL), DomainError);
}

TEST_CASE("idle state names round-trip") {
  for (IdleState s : kAllIdleStates) {
    auto back = idle_state_from(to_string(s));
    REQUIRE(back.has_value());
    CHECK(*back == s);
  }
  CHECK(!idle_state_from("XX").has_value());
  CHECK(!idle_state_from("fv").has_value());
}

TEST_CASE("message kind names round-trip") {
  for (MessageKind k : kAllMessageKinds) {
    auto back = message_kind_from(to_string(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK(!message_kind_from("PING").has_value());
}

TEST_CASE("only requests, orders and completions carry payload") {
  CHECK(kind_carries_payload(MessageKind::REQ));
  CHECK(kind_carries_payload(MessageKind::ORD));
  CHECK(kind_carries_payload(MessageKind::DN));
  CHECK(!kind_carries_payload(MessageKind::ACK));
  CHECK(!kind_carries_payload(MessageKind::NACK));
  CHECK(!kind_carries_payload(MessageKind::ABT));
  CHECK(!kind_carries_payload(MessageKind::TMPL_SPLIT));
}

TEST_CASE("message violations: empty recipients and forbidden payload") {
  Message m;
  m.kind = MessageKind::ACK;
  m.action = "GAPCLOSE";
  m.from = "v1";
  CHECK(message_violation(m).has_value());  // no recipients
  m.to = {"v2"};
  CHECK(!message_violation(m).has_value());
  m.payload["space_m"] = 6.0;
  CHECK(message_violation(m).has_value());  // ACK must not carry payload
  m.kind = MessageKind::ORD;
  CHECK(!message_violation(m).has_value());
}

TEST_CASE("golden actor table: which vehicle may perform which primitive") {
  // rows follow kAllPrimitiveOps, columns kAllIdleStates
  // (FV, PF, PL, WFV, WPF, WPL, TPL)
  const bool expected[11][7] = {
      {1, 0, 1, 0, 0, 0, 1},  // MTP
      {0, 1, 0, 0, 0, 0, 1},  // SH
      {0, 1, 1, 1, 1, 1, 1},  // BFV
      {1, 1, 0, 1, 1, 1, 1},  // BPL
      {1, 0, 1, 1, 1, 1, 1},  // BPF
      {1, 1, 1, 1, 1, 1, 0},  // BTL
      {1, 1, 1, 0, 0, 0, 0},  // SW
      {0, 0, 0, 1, 1, 1, 0},  // USW
      {1, 1, 1, 1, 1, 1, 1},  // W
      {1, 1, 1, 1, 1, 1, 1},  // SND
      {0, 0, 1, 0, 0, 0, 0},  // UPI
  };
  for (int r = 0; r < 11; ++r) {
    for (int c = 0; c < 7; ++c) {
      CAPTURE(to_string(kAllPrimitiveOps[r]));
      CAPTURE(to_string(kAllIdleStates[c]));
      CHECK(primitive_allowed(kAllPrimitiveOps[r], kAllIdleStates[c]) == expected[r][c]);
    }
  }
}

TEST_CASE("primitive op names round-trip") {
  for (PrimitiveOp op : kAllPrimitiveOps) {
    auto back = primitive_op_from(to_string(op));
    REQUIRE(back.has_value());
    CHECK(*back == op);
  }
  CHECK(!primitive_op_from("NOP").has_value());
}

TEST_CASE("result labels: RS or RA followed by digits") {
  CHECK(is_result_label("RS"));
  CHECK(is_result_label("RA1"));
  CHECK(is_result_label("RA12"));
  CHECK(!is_result_label("RS1"));
  CHECK(!is_result_label("RA"));
  CHECK(!is_result_label("R"));
  CHECK(!is_result_label(""));
  CHECK(!is_result_label("ra1"));
  CHECK(is_success_label("RS"));
  CHECK(!is_success_label("RA1"));
}
