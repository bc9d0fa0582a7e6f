#include "sead/catalogue.hpp"

#include <json.hpp>

#include <catalogue_data.hpp>

namespace sead::catalogue {

const mdl::Registry& builtin_registry() {
  static const mdl::Registry registry = [] {
    mdl::Registry r;
    for (const auto& [name, text] : embedded::catalogue_files()) {
      r.add(mdl::parse_document(text));
    }
    return r;
  }();
  return registry;
}

const std::vector<std::pair<std::string, std::string>>& sources() {
  return embedded::catalogue_files();
}

const std::vector<Mutant>& mutants() {
  static const std::vector<Mutant> all = [] {
    const nlohmann::json expected = nlohmann::json::parse(embedded::mutant_expectations());
    std::vector<Mutant> out;
    for (const auto& [name, text] : embedded::mutant_files()) {
      Mutant m;
      m.name = name;
      m.text = text;
      if (expected.contains(name)) m.intended_rule = expected.at(name).get<std::string>();
      out.push_back(std::move(m));
    }
    return out;
  }();
  return all;
}

}  // namespace sead::catalogue
