#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sead/catalogue.hpp"
#include "sead/verification.hpp"

using namespace sead;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("builtin registry holds the whole shipped catalogue") {
  const auto& reg = catalogue::builtin_registry();
  CHECK(reg.size() == 14);
  for (const auto* id : {"NEGOTIATE", "MOVETOPOS", "ATTACH", "GAPCLOSE", "GAPOPEN", "LC_BPF",
                         "SPLIT_AT", "LEAVE_PREP", "DISMISS", "JOIN_TAIL", "JOIN_MIDDLE", "LEAVE",
                         "SPLIT", "SPREAD"}) {
    CAPTURE(id);
    CHECK(reg.contains(id));
  }
}

TEST_CASE("embedded sources match the files on disk byte for byte") {
  auto dir = std::filesystem::path(SEAD_SOURCE_DIR) / "catalogue";
  for (const auto& [name, text] : catalogue::sources()) {
    CAPTURE(name);
    CHECK(text == slurp(dir / name));
  }
  for (const auto& m : catalogue::mutants()) {
    CAPTURE(m.name);
    CHECK(m.text == slurp(dir / "mutants" / m.name));
  }
}

TEST_CASE("every shipped document is byte-canonical") {
  for (const auto& [name, text] : catalogue::sources()) {
    CAPTURE(name);
    auto doc = mdl::parse_document(text);
    CHECK(mdl::serialize_document(doc) == text);
  }
}

TEST_CASE("every shipped document validates and verifies clean") {
  const auto& reg = catalogue::builtin_registry();
  for (const auto& id : reg.ids()) {
    CAPTURE(id);
    auto diags = verify::verify_document(reg.at(id), &reg);
    for (const auto& d : diags) MESSAGE(mdl::to_string(d));
    CHECK(diags.empty());
  }
}

TEST_CASE("the shipped catalogue compiles into dispatchable behaviour") {
  auto res = mdl::compile(catalogue::builtin_registry());
  for (const auto& d : res.diagnostics) MESSAGE(mdl::to_string(d));
  REQUIRE(res.ok());
  CHECK(res.behaviour.manoeuvres.size() == 5);
  // every order-driven sub-manoeuvre is reachable as a reactive dispatch
  CHECK(res.behaviour.reactive_for("GAPCLOSE", MessageKind::ORD) != nullptr);
  CHECK(res.behaviour.reactive_for("NEGOTIATE", MessageKind::REQ) != nullptr);
  CHECK(res.behaviour.reactive_for("GAPCLOSE", MessageKind::REQ) == nullptr);
}

TEST_CASE("each mutant is rejected by exactly its intended rule") {
  const auto& reg = catalogue::builtin_registry();
  REQUIRE(catalogue::mutants().size() == 5);
  for (const auto& m : catalogue::mutants()) {
    CAPTURE(m.name);
    REQUIRE(!m.intended_rule.empty());
    auto doc = mdl::parse_document(m.text);
    auto diags = verify::verify_document(doc, &reg);
    std::set<std::string> rules;
    for (const auto& d : diags) {
      if (d.severity == mdl::Diagnostic::Severity::Error) rules.insert(d.rule);
    }
    for (const auto& d : diags) MESSAGE(mdl::to_string(d));
    CHECK(rules == std::set<std::string>{m.intended_rule});
  }
}

TEST_CASE("mutants stay canonical so the intended defect is the only difference") {
  for (const auto& m : catalogue::mutants()) {
    CAPTURE(m.name);
    auto doc = mdl::parse_document(m.text);
    CHECK(mdl::serialize_document(doc) == m.text);
  }
}
