#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sead/mdl.hpp"

// The shipped manoeuvre catalogue, embedded at build time so the binaries
// work without any files on disk.

namespace sead::catalogue {

// every embedded document, parsed, keyed for lookup by action id
const mdl::Registry& builtin_registry();

// raw embedded sources: (basename, bytes)
const std::vector<std::pair<std::string, std::string>>& sources();

struct Mutant {
  std::string name;           // basename of the fixture
  std::string text;           // raw bytes
  std::string intended_rule;  // the one rule id it must be rejected by
};

// deliberately broken fixtures with the rule each must trip
const std::vector<Mutant>& mutants();

}  // namespace sead::catalogue
