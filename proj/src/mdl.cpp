#include "sead/mdl.hpp"

#include <algorithm>
#include <sstream>

namespace sead::mdl {

const RoleDef* MdlDocument::role(const std::string& name) const {
  for (const auto& r : roles) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const RoleDef* MdlDocument::controlling_role() const {
  for (const auto& r : roles) {
    if (r.part == RoleDef::Part::Controlling) return &r;
  }
  return nullptr;
}

const StateDef* MdlDocument::state(const std::string& role_name, const std::string& id) const {
  auto rit = states.find(role_name);
  if (rit == states.end()) return nullptr;
  auto sit = rit->second.find(id);
  if (sit == rit->second.end()) return nullptr;
  return &sit->second;
}

const ResultDef* MdlDocument::result(const std::string& label) const {
  for (const auto& r : results) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

const StepDef* MdlDocument::step(const std::string& id) const {
  for (const auto& s : steps) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

bool operator==(const MdlDocument& a, const MdlDocument& b) {
  return serialize_document(a) == serialize_document(b);
}

ParseError::ParseError(const std::string& msg, int line_in, int col_in)
    : MdlError(msg), line(line_in), col(col_in) {}

SchemaError::SchemaError(const std::string& msg, std::string path_in)
    : MdlError(path_in.empty() ? msg : path_in + ": " + msg), path(std::move(path_in)) {}

void Registry::add(MdlDocument doc) {
  if (doc.id.empty()) throw DomainError("registry: document without id");
  auto [it, inserted] = docs_.emplace(doc.id, std::move(doc));
  if (!inserted) throw DomainError("registry: duplicate id " + it->first);
}

bool Registry::contains(const ActionId& id) const { return docs_.count(id) != 0; }

const MdlDocument* Registry::find(const ActionId& id) const {
  auto it = docs_.find(id);
  return it == docs_.end() ? nullptr : &it->second;
}

const MdlDocument& Registry::at(const ActionId& id) const {
  const MdlDocument* doc = find(id);
  if (!doc) throw DomainError("registry: unknown id " + id);
  return *doc;
}

std::vector<ActionId> Registry::ids() const {
  std::vector<ActionId> out;
  out.reserve(docs_.size());
  for (const auto& [id, doc] : docs_) out.push_back(id);
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.severity == Diagnostic::Severity::Error;
  });
}

bool has_rule(const std::vector<Diagnostic>& diags, const std::string& rule) {
  return std::any_of(diags.begin(), diags.end(),
                     [&](const Diagnostic& d) { return d.rule == rule; });
}

const CompiledManoeuvre* CompiledBehaviour::manoeuvre(const ActionId& id) const {
  auto it = manoeuvres.find(id);
  return it == manoeuvres.end() ? nullptr : &it->second;
}

const CompiledBehaviour::Dispatch* CompiledBehaviour::reactive_for(const ActionId& action,
                                                                   MessageKind kind) const {
  auto it = reactive.find({action, kind});
  return it == reactive.end() ? nullptr : &it->second;
}

std::string to_string(const Diagnostic& d) {
  std::ostringstream os;
  os << (d.severity == Diagnostic::Severity::Error ? "error" : "warning");
  os << "[" << d.rule << "] " << d.path << ": " << d.message;
  return os.str();
}

std::string pattern_to_string(const EventPattern& p) {
  switch (p.kind) {
    case EventPattern::Kind::Msg: {
      std::string s = "msg " + std::string(to_string(*p.msg_kind));
      if (p.msg_action) s += "/" + *p.msg_action;
      return s;
    }
    case EventPattern::Kind::Timeout:
      if (p.timeout_s) return "timeout " + std::to_string(*p.timeout_s);
      return "timeout";
    case EventPattern::Kind::Arrived:
      return "arrived";
    case EventPattern::Kind::Done:
      return "done";
    case EventPattern::Kind::Policy:
      return p.policy_accept ? "policy accept" : "policy reject";
  }
  return "?";
}

}  // namespace sead::mdl
