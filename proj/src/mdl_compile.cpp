#include "sead/mdl.hpp"

namespace sead::mdl {

CompileResult compile(const Registry& registry) {
  CompileResult out;
  out.behaviour.registry = &registry;

  std::map<ActionId, bool> doc_ok;
  for (const ActionId& id : registry.ids()) {
    const MdlDocument& doc = registry.at(id);
    auto diags = validate(doc, &registry);
    doc_ok[id] = !has_errors(diags);
    for (auto& d : diags) {
      d.path = id + d.path;
      out.diagnostics.push_back(std::move(d));
    }
  }

  for (const ActionId& id : registry.ids()) {
    const MdlDocument& doc = registry.at(id);
    if (!doc_ok[id]) continue;

    if (doc.kind == MdlDocument::Kind::SubManoeuvre) {
      for (const auto& role : doc.roles) {
        CompiledBehaviour::Dispatch d{&doc, &role};
        if (role.init == RoleDef::Init::Direct) {
          // only the reactive half can be started on behalf of a requester;
          // direct-initiated controlling halves are launched by the leader
          if (role.part == RoleDef::Part::Reactive) out.behaviour.requester[id] = d;
          continue;
        }
        // message-initiated: triggered by the kinds its entry state reacts to
        const StateDef* start = doc.state(role.name, role.start);
        if (!start) continue;
        for (const auto& t : start->transitions) {
          if (t.on.kind == EventPattern::Kind::Msg && t.on.msg_kind) {
            out.behaviour.reactive[{id, *t.on.msg_kind}] = d;
          }
        }
      }
      continue;
    }

    // manoeuvre: resolve step references; skip if any invoked doc is broken
    CompiledManoeuvre cm;
    cm.doc = &doc;
    bool resolved = true;
    std::map<std::string, int> step_index;
    for (std::size_t i = 0; i < doc.steps.size(); ++i) step_index[doc.steps[i].id] = int(i);

    for (const StepDef& step : doc.steps) {
      CompiledStep cs;
      cs.def = &step;
      for (const StepInvocation& inv : step.invoke) {
        const MdlDocument* sub = registry.find(inv.action);
        if (!sub || sub->kind != MdlDocument::Kind::SubManoeuvre || !doc_ok[inv.action]) {
          resolved = false;
          break;
        }
        cs.invoked.push_back(sub);
      }
      if (!resolved) break;
      for (const NextEntry& e : step.next) {
        int target = -1;
        if (e.to != "TERMINATE") {
          auto it = step_index.find(e.to);
          if (it == step_index.end()) {
            resolved = false;
            break;
          }
          target = it->second;
        }
        cs.next[e.on] = target;
      }
      if (!resolved) break;
      cm.steps.push_back(std::move(cs));
    }
    if (!resolved) {
      out.diagnostics.push_back({Diagnostic::Severity::Error, rules::kUnresolvedReference, id,
                                 "manoeuvre references an unknown or invalid sub-manoeuvre"});
      continue;
    }

    if (!cm.steps.empty() && !cm.steps[0].def->sim) {
      const RoleDef* c = cm.steps[0].invoked[0]->controlling_role();
      cm.negotiated = c && c->init == RoleDef::Init::Message;
    }
    out.behaviour.manoeuvres.emplace(id, std::move(cm));
  }

  return out;
}

}  // namespace sead::mdl
