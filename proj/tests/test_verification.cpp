#include <doctest.h>

#include <algorithm>

#include "sead/catalogue.hpp"
#include "sead/verification.hpp"

using namespace sead;

namespace {

const mdl::MdlDocument& shipped(const std::string& id) {
  return catalogue::builtin_registry().at(id);
}

const catalogue::Mutant& mutant(const std::string& name) {
  for (const auto& m : catalogue::mutants()) {
    if (m.name == name) return m;
  }
  throw std::runtime_error("no such mutant: " + name);
}

std::set<std::string> error_rules(const std::vector<mdl::Diagnostic>& diags) {
  std::set<std::string> rules;
  for (const auto& d : diags) {
    if (d.severity == mdl::Diagnostic::Severity::Error) rules.insert(d.rule);
  }
  return rules;
}

}  // namespace

TEST_CASE("gap closing admits exactly the two declared conclusions") {
  auto outcomes = verify::enumerate_outcomes(shipped("GAPCLOSE"));
  REQUIRE(outcomes.size() == 2);
  std::vector<verify::Outcome> v(outcomes.begin(), outcomes.end());
  std::vector<std::string> rendered;
  for (const auto& o : v) rendered.push_back(verify::to_string(o));
  std::sort(rendered.begin(), rendered.end());
  CHECK(rendered[0] == "A=RA1(PL) B=RA1(PL)");
  CHECK(rendered[1] == "A=RS(PL) B=RS(PF)");
}

TEST_CASE("every shipped sub-manoeuvre synchronises") {
  const auto& reg = catalogue::builtin_registry();
  for (const auto& id : reg.ids()) {
    const auto& doc = reg.at(id);
    if (doc.kind != mdl::MdlDocument::Kind::SubManoeuvre) continue;
    CAPTURE(id);
    auto diags = verify::check_synchronisation(doc);
    for (const auto& d : diags) MESSAGE(mdl::to_string(d));
    CHECK(diags.empty());
  }
}

TEST_CASE("role projections cover both halves of a divergent conclusion") {
  auto proj = verify::role_projections(shipped("GAPCLOSE"));
  // a dropped completion report leaves A aborted while B already confirmed
  CHECK(proj.count({"A", "RA1", IdleState::PL}));
  CHECK(proj.count({"B", "RS", IdleState::PF}));
  CHECK(proj.size() == 4);
}

TEST_CASE("negotiation resolves to acceptance or rejection only") {
  auto outcomes = verify::enumerate_outcomes(shipped("NEGOTIATE"));
  CHECK(outcomes.size() == 2);
  for (const auto& o : outcomes) {
    CHECK(o.labels.at("A") == o.labels.at("B"));
  }
}

TEST_CASE("dismissal always concludes successfully") {
  auto outcomes = verify::enumerate_outcomes(shipped("DISMISS"));
  REQUIRE(outcomes.size() == 1);
  CHECK(outcomes.begin()->labels.at("B") == "RS");
}

TEST_CASE("simultaneous spreading can settle in all four result tuples") {
  auto tuples =
      verify::sim_tuples(shipped("SPREAD"), "spread", catalogue::builtin_registry());
  REQUIRE(tuples.size() == 4);
  for (const auto& label_a : {"RS", "RA1"}) {
    for (const auto& label_b : {"RS", "RA1"}) {
      CHECK(tuples.count({label_a, label_b}));
    }
  }
}

TEST_CASE("a leader that waits for a report instead of aborting risks deadlock") {
  auto doc = mdl::parse_document(mutant("gapclose_deadlock.mdl.json").text);
  CHECK(mdl::validate(doc, &catalogue::builtin_registry()).empty());
  auto diags = verify::check_synchronisation(doc);
  CHECK(error_rules(diags) == std::set<std::string>{verify::rules::kDeadlockRisk});
}

TEST_CASE("a conclusion that leaves a transient leader is unstable") {
  auto doc = mdl::parse_document(mutant("gapclose_unstable_terminal.mdl.json").text);
  CHECK(mdl::validate(doc, &catalogue::builtin_registry()).empty());
  auto diags = verify::check_stability(doc, nullptr);
  CHECK(error_rules(diags) == std::set<std::string>{verify::rules::kStabilityTerminalUnstable});
}

TEST_CASE("stability walk catches an entry mismatch past the first step") {
  // after a successful negotiation B idles as WFV, which closing cannot accept
  const char* text = R"({
  "id": "BAD_WALK",
  "kind": "manoeuvre",
  "mdl-version": "1",
  "requester_role": "B",
  "roles": [{"entry_state": "FV", "name": "B"}],
  "steps": [
    {
      "id": "negotiate",
      "invoke": "NEGOTIATE",
      "next": [{"on": "RS", "to": "close"}, {"on": "RA1", "to": "TERMINATE"}],
      "participants": {"B": "B"}
    },
    {
      "args": {"ahead": {"$vehicle": {"predecessor_of": "B"}}, "space_m": 6.0},
      "id": "close",
      "invoke": "GAPCLOSE",
      "next": [{"on": ["RS"], "to": "TERMINATE"}, {"on": ["RA1"], "to": "TERMINATE"}],
      "participants": {"B": "B"}
    }
  ]
})";
  auto doc = mdl::parse_document(std::string(text) + "\n");
  const auto& reg = catalogue::builtin_registry();
  CHECK(mdl::validate(doc, &reg).empty());
  auto diags = verify::check_stability(doc, &reg);
  CHECK(error_rules(diags) == std::set<std::string>{mdl::rules::kEntryMismatch});
}

TEST_CASE("stability walk accepts every shipped manoeuvre") {
  const auto& reg = catalogue::builtin_registry();
  for (const auto& id : reg.ids()) {
    const auto& doc = reg.at(id);
    if (doc.kind != mdl::MdlDocument::Kind::Manoeuvre) continue;
    CAPTURE(id);
    auto diags = verify::check_stability(doc, &reg);
    for (const auto& d : diags) MESSAGE(mdl::to_string(d));
    CHECK(diags.empty());
  }
}
