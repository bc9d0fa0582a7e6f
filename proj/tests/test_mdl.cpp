#include <doctest.h>

#include <functional>
#include <set>
#include <string>

#include <json.hpp>

#include "sead/catalogue.hpp"
#include "sead/mdl.hpp"

using namespace sead;
using nlohmann::json;

namespace {

std::string shipped_text(const std::string& basename) {
  for (const auto& [name, text] : catalogue::sources()) {
    if (name == basename) return text;
  }
  throw std::runtime_error("no such fixture: " + basename);
}

// parse → mutate → validate, returning only error rule ids
std::set<std::string> rules_after(const std::string& basename,
                                  const std::function<void(json&)>& mutate) {
  json j = json::parse(shipped_text(basename));
  mutate(j);
  auto doc = mdl::parse_document(j.dump(2) + "\n");
  std::set<std::string> rules;
  for (const auto& d : mdl::validate(doc, &catalogue::builtin_registry())) {
    if (d.severity == mdl::Diagnostic::Severity::Error) rules.insert(d.rule);
  }
  return rules;
}

}  // namespace

TEST_CASE("canonical bytes survive a parse/serialize round trip") {
  std::string text = shipped_text("gapclose.mdl.json");
  auto doc = mdl::parse_document(text);
  CHECK(mdl::serialize_document(doc) == text);
  // equality is canonical-byte equality
  auto again = mdl::parse_document(mdl::serialize_document(doc));
  CHECK(doc == again);
}

TEST_CASE("durations keep their decimal point") {
  std::string text = shipped_text("gapclose.mdl.json");
  CHECK(text.find("\"timeout_s\": 30.0") != std::string::npos);
  // integer-looking doubles must not collapse to integers when rewritten
  auto doc = mdl::parse_document(text);
  CHECK(mdl::serialize_document(doc).find("30.0") != std::string::npos);
}

TEST_CASE("malformed JSON reports line and column") {
  try {
    mdl::parse_document("{\n  \"id\": nope\n}\n");
    FAIL("expected ParseError");
  } catch (const mdl::ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.col > 0);
    CHECK(std::string(e.what()).find("malformed JSON") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected with a JSON path") {
  json j = json::parse(shipped_text("gapclose.mdl.json"));
  j["surprise"] = true;
  try {
    mdl::parse_document(j.dump(2) + "\n");
    FAIL("expected SchemaError");
  } catch (const mdl::SchemaError& e) {
    CHECK(std::string(e.what()).find("surprise") != std::string::npos);
  }
}

TEST_CASE("only language version 1 is accepted") {
  json j = json::parse(shipped_text("gapclose.mdl.json"));
  j["mdl-version"] = "2";
  CHECK_THROWS_AS(mdl::parse_document(j.dump(2) + "\n"), mdl::SchemaError);
}

TEST_CASE("an event pattern carries exactly one trigger") {
  json j = json::parse(shipped_text("gapclose.mdl.json"));
  j["states"]["B"]["close"]["transitions"][0]["on"] = {{"msg", "ABT"}, {"timeout", true}};
  CHECK_THROWS_AS(mdl::parse_document(j.dump(2) + "\n"), mdl::SchemaError);
}

TEST_CASE("timeouts must be positive") {
  json j = json::parse(shipped_text("gapclose.mdl.json"));
  j["states"]["B"]["close"]["transitions"][2]["on"]["timeout"] = -5.0;
  CHECK_THROWS_AS(mdl::parse_document(j.dump(2) + "\n"), mdl::SchemaError);
}

TEST_CASE("a misdeclared final idle state is caught") {
  auto rules = rules_after("gapclose.mdl.json", [](json& j) {
    j["results"][0]["final"]["B"] = "PL";  // RS actually leaves B a follower
  });
  CHECK(rules == std::set<std::string>{mdl::rules::kResultStateMismatch});
}

TEST_CASE("transitions may only target known states or declared results") {
  auto rules = rules_after("gapclose.mdl.json", [](json& j) {
    j["states"]["B"]["close"]["transitions"][1]["to"] = "nowhere";
  });
  CHECK(rules.count(mdl::rules::kUnknownTarget));
}

TEST_CASE("a state may hold at most one wait") {
  auto rules = rules_after("gapclose.mdl.json", [](json& j) {
    json w = {{"op", "W"}, {"timeout_s", 5.0}};
    j["states"]["A"]["order"]["primitives"].push_back(w);
  });
  CHECK(rules.count(mdl::rules::kWaitShape));
}

TEST_CASE("a reactive entry state is triggered by requests or orders only") {
  auto rules = rules_after("gapclose.mdl.json", [](json& j) {
    j["states"]["B"]["await_order"]["transitions"][0]["on"]["msg"] = "ACK";
  });
  CHECK(rules.count(mdl::rules::kTriggerKind));
}

TEST_CASE("acknowledgements must not carry payload") {
  auto rules = rules_after("negotiate.mdl.json", [](json& j) {
    j["states"]["A"]["accept"]["primitives"][0]["msg"]["payload"] = {{"d", 6.0}};
  });
  CHECK(rules.count(mdl::rules::kPayloadForbidden));
}

TEST_CASE("a step must cover every result tuple of what it invokes") {
  auto rules = rules_after("join_tail.mdl.json", [](json& j) {
    auto& next = j["steps"][0]["next"];
    next.erase(1);  // drop the RA1 branch of the negotiation
  });
  CHECK(rules == std::set<std::string>{mdl::rules::kResultCoverageMissing});
}

TEST_CASE("a sub-manoeuvre pairs one controlling with one reactive role") {
  auto rules = rules_after("gapclose.mdl.json", [](json& j) {
    j["roles"][1]["part"] = "controlling";
    j["roles"][1]["entry_state"] = "PL";
  });
  CHECK(rules.count(mdl::rules::kRoleShape));
}

TEST_CASE("registry rejects duplicate action ids") {
  mdl::Registry reg;
  reg.add(mdl::parse_document(shipped_text("gapclose.mdl.json")));
  CHECK(reg.contains("GAPCLOSE"));
  CHECK_THROWS_AS(reg.add(mdl::parse_document(shipped_text("gapclose.mdl.json"))), DomainError);
  CHECK(reg.find("GAPCLOSE") != nullptr);
  CHECK(reg.find("NOPE") == nullptr);
  CHECK_THROWS_AS(reg.at("NOPE"), DomainError);
}

TEST_CASE("loading a missing file names the file") {
  try {
    mdl::load_document("/nonexistent/x.mdl.json");
    FAIL("expected MdlError");
  } catch (const mdl::MdlError& e) {
    CHECK(std::string(e.what()).find("x.mdl.json") != std::string::npos);
  }
}
