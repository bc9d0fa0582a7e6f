#include "sead/verification.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <sstream>

#include "sead/statemachine.hpp"

namespace sead::verify {

namespace {

constexpr std::size_t kConfigBound = 1'000'000;
// deadline assumed for controlling waits that rely on the runtime default
constexpr double kDefaultDeadlineS = 30.0;

using Severity = mdl::Diagnostic::Severity;

// one configuration of the asynchronous product of the role machines
struct Config {
  std::vector<std::string> state;             // per role, "" once concluded
  std::vector<std::string> result;            // label once concluded, else ""
  std::vector<std::pair<int, int>> inflight;  // sorted (kind, to-role) pairs

  auto operator<=>(const Config&) const = default;
};

void add_inflight(Config& c, int kind, int to) {
  auto entry = std::make_pair(kind, to);
  c.inflight.insert(std::upper_bound(c.inflight.begin(), c.inflight.end(), entry), entry);
}

void remove_inflight(Config& c, int kind, int to) {
  auto entry = std::make_pair(kind, to);
  c.inflight.erase(std::lower_bound(c.inflight.begin(), c.inflight.end(), entry));
}

struct Explorer {
  const mdl::MdlDocument& doc;
  std::vector<const mdl::RoleDef*> roles;

  explicit Explorer(const mdl::MdlDocument& d) : doc(d) {
    for (const auto& r : d.roles) roles.push_back(&r);
  }

  int role_index(const std::string& name) const {
    for (std::size_t i = 0; i < roles.size(); ++i) {
      if (roles[i]->name == name) return static_cast<int>(i);
    }
    throw DomainError(doc.id + ": unknown role " + name);
  }

  bool concluded(const Config& c, int i) const { return !c.result[i].empty(); }

  bool all_concluded(const Config& c) const {
    for (const auto& r : c.result) {
      if (r.empty()) return false;
    }
    return true;
  }

  sm::RoleMachine machine_at(const Config& c, int i) const {
    sm::RoleMachine m = sm::make_machine(doc, *roles[i]);
    m.started = true;
    m.state = c.state[i];
    m.concluded = concluded(c, i);
    m.result = c.result[i];
    return m;
  }

  // fold a machine step back into the configuration
  void absorb(Config& c, int i, const sm::RoleMachine& m, const sm::StepOutput& out) const {
    for (const auto* p : out.primitives) {
      if (p->op != PrimitiveOp::SND || !p->msg) continue;
      add_inflight(c, static_cast<int>(p->msg->kind), role_index(p->msg->to_role));
    }
    if (m.concluded) {
      c.result[i] = m.result;
      c.state[i].clear();
    } else {
      c.state[i] = m.state;
    }
  }

  Message synthesize(int kind, int to) const {
    Message msg;
    msg.kind = static_cast<MessageKind>(kind);
    msg.action = doc.id;
    msg.from = "peer";
    msg.to = {roles[static_cast<std::size_t>(to)]->name};
    return msg;
  }

  // an in-flight message to i that its resting state would consume
  bool matching_inflight(const Config& c, int i) const {
    if (concluded(c, i)) return false;
    const mdl::StateDef* s = doc.state(roles[static_cast<std::size_t>(i)]->name, c.state[i]);
    if (!s) return false;
    for (const auto& [kind, to] : c.inflight) {
      if (to != i) continue;
      sm::Event e = sm::Event::message(synthesize(kind, i));
      for (const auto& t : s->transitions) {
        if (sm::matches(t.on, e)) return true;
      }
    }
    return false;
  }

  Config initial() const {
    Config c;
    c.state.resize(roles.size());
    c.result.resize(roles.size());
    for (std::size_t i = 0; i < roles.size(); ++i) {
      sm::RoleMachine m = sm::make_machine(doc, *roles[i]);
      sm::StepOutput out = sm::start(m);
      absorb(c, static_cast<int>(i), m, out);
    }
    return c;
  }

  void try_branch(const Config& c, int i, const sm::Event& e, std::vector<Config>& out) const {
    Config next = c;
    sm::RoleMachine m = machine_at(next, i);
    sm::StepOutput res = sm::step(m, e);
    if (!res.advanced) return;
    absorb(next, i, m, res);
    out.push_back(std::move(next));
  }

  // Race discipline: a leader's accept/reject decision is immediate, so while
  // any role rests in a policy state only its decision branches are explored.
  // Delivery latency is far below every deadline, so no timeout fires while a
  // message is in flight, and a deliverable message a state would consume also
  // pre-empts that state's arrived branch. Of the waits that can still expire,
  // only the earliest deadline does. Messages nobody can consume are dropped.
  std::vector<Config> successors(const Config& c) const {
    std::vector<Config> out;

    for (std::size_t i = 0; i < roles.size(); ++i) {
      int ri = static_cast<int>(i);
      if (concluded(c, ri)) continue;
      sm::RoleMachine probe = machine_at(c, ri);
      if (sm::resting_state_handles(probe, sm::Event::Kind::Policy)) {
        try_branch(c, ri, sm::Event::policy(true), out);
        try_branch(c, ri, sm::Event::policy(false), out);
        return out;
      }
    }

    for (std::size_t k = 0; k < c.inflight.size(); ++k) {
      if (k > 0 && c.inflight[k] == c.inflight[k - 1]) continue;
      auto [kind, to] = c.inflight[k];
      Config next = c;
      remove_inflight(next, kind, to);
      if (!concluded(c, to)) {
        sm::RoleMachine m = machine_at(next, to);
        sm::StepOutput res = sm::step(m, sm::Event::message(synthesize(kind, to)));
        if (res.advanced) absorb(next, to, m, res);
      }
      out.push_back(std::move(next));
    }

    std::optional<double> min_deadline;
    std::vector<std::optional<double>> deadline(roles.size());
    if (c.inflight.empty()) {
      for (std::size_t i = 0; i < roles.size(); ++i) {
        int ri = static_cast<int>(i);
        if (concluded(c, ri)) continue;
        sm::RoleMachine m = machine_at(c, ri);
        deadline[i] = sm::resting_timeout(m, kDefaultDeadlineS);
        if (deadline[i] && (!min_deadline || *deadline[i] < *min_deadline)) {
          min_deadline = deadline[i];
        }
      }
    }

    for (std::size_t i = 0; i < roles.size(); ++i) {
      int ri = static_cast<int>(i);
      if (concluded(c, ri) || matching_inflight(c, ri)) continue;
      sm::RoleMachine probe = machine_at(c, ri);
      if (sm::resting_state_handles(probe, sm::Event::Kind::Arrived)) {
        try_branch(c, ri, sm::Event::arrived(), out);
      }
      if (deadline[i] && *deadline[i] <= *min_deadline) {
        try_branch(c, ri, sm::Event::timeout(), out);
      }
    }
    return out;
  }

  std::string describe(const Config& c) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < roles.size(); ++i) {
      if (i) os << " ";
      os << roles[i]->name;
      if (concluded(c, static_cast<int>(i))) {
        os << "=" << c.result[i];
      } else {
        os << "@" << c.state[i];
      }
    }
    os << " inflight[";
    for (std::size_t k = 0; k < c.inflight.size(); ++k) {
      if (k) os << " ";
      os << to_string(static_cast<MessageKind>(c.inflight[k].first)) << "->"
         << roles[static_cast<std::size_t>(c.inflight[k].second)]->name;
    }
    os << "]";
    return os.str();
  }
};

std::string join_labels(const std::vector<std::string>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) s += ",";
    s += labels[i];
  }
  return s;
}

}  // namespace

std::string to_string(const Outcome& o) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [role, label] : o.labels) {
    if (!first) os << " ";
    first = false;
    os << role << "=" << label << "(" << sead::to_string(o.finals.at(role)) << ")";
  }
  return os.str();
}

Exploration explore(const mdl::MdlDocument& sub) {
  Exploration result;
  if (sub.kind != mdl::MdlDocument::Kind::SubManoeuvre) {
    throw DomainError(sub.id + ": exploration applies to sub-manoeuvres");
  }
  Explorer ex(sub);

  std::map<Config, int> index;
  std::vector<Config> configs;
  std::vector<std::vector<int>> edges;
  std::deque<int> queue;

  auto intern = [&](Config c) {
    auto [it, inserted] = index.try_emplace(std::move(c), static_cast<int>(configs.size()));
    if (inserted) {
      configs.push_back(it->first);
      edges.emplace_back();
      queue.push_back(it->second);
    }
    return it->second;
  };

  intern(ex.initial());
  while (!queue.empty()) {
    if (configs.size() > kConfigBound) {
      result.configs = configs.size();
      result.diagnostics.push_back({Severity::Error, rules::kStateExplosion, "protocol",
                                    "exploration exceeded " + std::to_string(kConfigBound) +
                                        " configurations"});
      return result;
    }
    int id = queue.front();
    queue.pop_front();
    for (Config& s : ex.successors(configs[static_cast<std::size_t>(id)])) {
      int target = intern(std::move(s));  // may grow `edges`
      edges[static_cast<std::size_t>(id)].push_back(target);
    }
  }
  result.configs = configs.size();

  std::vector<char> reaches_outcome(configs.size(), 0);
  std::deque<int> back;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!ex.all_concluded(configs[i])) continue;
    reaches_outcome[i] = 1;
    back.push_back(static_cast<int>(i));

    Outcome o;
    for (std::size_t r = 0; r < sub.roles.size(); ++r) {
      const std::string& role = sub.roles[r].name;
      const std::string& label = configs[i].result[r];
      const mdl::ResultDef* rd = sub.result(label);
      if (!rd || !rd->final_states.count(role)) {
        throw DomainError(sub.id + ": concluded with undeclared result " + label);
      }
      o.labels[role] = label;
      o.finals[role] = rd->final_states.at(role);
    }
    result.outcomes.insert(std::move(o));
  }

  std::vector<std::vector<int>> redges(configs.size());
  for (std::size_t u = 0; u < edges.size(); ++u) {
    for (int v : edges[u]) redges[static_cast<std::size_t>(v)].push_back(static_cast<int>(u));
  }
  while (!back.empty()) {
    int v = back.front();
    back.pop_front();
    for (int u : redges[static_cast<std::size_t>(v)]) {
      if (reaches_outcome[static_cast<std::size_t>(u)]) continue;
      reaches_outcome[static_cast<std::size_t>(u)] = 1;
      back.push_back(u);
    }
  }
  std::size_t blocked = 0;
  std::string example;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (reaches_outcome[i]) continue;
    if (blocked == 0) example = ex.describe(configs[i]);
    ++blocked;
  }
  if (blocked > 0) {
    result.diagnostics.push_back(
        {Severity::Error, rules::kDeadlockRisk, "protocol",
         std::to_string(blocked) + " of " + std::to_string(configs.size()) +
             " reachable configurations cannot reach any conclusion, e.g. " + example});
  }
  return result;
}

std::vector<mdl::Diagnostic> check_synchronisation(const mdl::MdlDocument& sub) {
  return explore(sub).diagnostics;
}

std::set<Outcome> enumerate_outcomes(const mdl::MdlDocument& sub) {
  return explore(sub).outcomes;
}

std::set<std::tuple<std::string, std::string, IdleState>> role_projections(
    const mdl::MdlDocument& sub) {
  std::set<std::tuple<std::string, std::string, IdleState>> out;
  for (const Outcome& o : enumerate_outcomes(sub)) {
    for (const auto& [role, label] : o.labels) {
      out.insert({role, label, o.finals.at(role)});
    }
  }
  return out;
}

std::set<std::vector<std::string>> sim_tuples(const mdl::MdlDocument& manoeuvre,
                                              const std::string& step_id,
                                              const mdl::Registry& registry) {
  std::set<std::vector<std::string>> tuples;
  const mdl::StepDef* step = manoeuvre.step(step_id);
  if (!step) return tuples;

  std::vector<std::vector<std::string>> per_child;
  for (const auto& inv : step->invoke) {
    const mdl::MdlDocument* sub = registry.find(inv.action);
    if (!sub || sub->kind != mdl::MdlDocument::Kind::SubManoeuvre) return tuples;
    const std::string& controlling = sub->controlling_role()->name;
    std::set<std::string> labels;
    for (const Outcome& o : enumerate_outcomes(*sub)) {
      labels.insert(o.labels.at(controlling));
    }
    per_child.emplace_back(labels.begin(), labels.end());
    if (per_child.back().empty()) return tuples;
  }

  std::vector<std::size_t> pick(per_child.size(), 0);
  while (true) {
    std::vector<std::string> tuple;
    for (std::size_t k = 0; k < per_child.size(); ++k) tuple.push_back(per_child[k][pick[k]]);
    tuples.insert(std::move(tuple));
    std::size_t k = per_child.size();
    while (k > 0) {
      --k;
      if (++pick[k] < per_child[k].size()) break;
      pick[k] = 0;
      if (k == 0) return tuples;
    }
  }
}

std::vector<mdl::Diagnostic> check_stability(const mdl::MdlDocument& doc,
                                             const mdl::Registry* registry) {
  std::vector<mdl::Diagnostic> out;
  if (doc.kind == mdl::MdlDocument::Kind::SubManoeuvre) {
    for (const auto& r : doc.results) {
      for (const auto& [role, idle] : r.final_states) {
        if (idle == IdleState::TPL) {
          out.push_back({Severity::Error, rules::kStabilityTerminalUnstable,
                         "results." + r.label + "." + role,
                         "declared final leaves " + role + " a transient leader"});
        }
      }
    }
    return out;
  }
  if (!registry || doc.steps.empty()) return out;

  std::map<std::string, std::size_t> step_index;
  for (std::size_t i = 0; i < doc.steps.size(); ++i) step_index[doc.steps[i].id] = i;

  std::map<std::string, IdleState> entry;
  for (const auto& r : doc.roles) entry[r.name] = r.entry_state;

  std::set<std::pair<std::size_t, std::map<std::string, IdleState>>> visited;
  std::deque<std::pair<std::size_t, std::map<std::string, IdleState>>> work;
  work.push_back({0, entry});
  std::set<std::string> reported;

  while (!work.empty()) {
    auto [si, idles] = work.front();
    work.pop_front();
    if (!visited.insert({si, idles}).second) continue;
    const mdl::StepDef& step = doc.steps[si];

    std::vector<const mdl::MdlDocument*> subs;
    bool resolved = true;
    for (const auto& inv : step.invoke) {
      const mdl::MdlDocument* sub = registry->find(inv.action);
      if (!sub || sub->kind != mdl::MdlDocument::Kind::SubManoeuvre) {
        resolved = false;  // left to validation
        break;
      }
      subs.push_back(sub);
      for (const auto& [sub_role, man_role] : inv.participants) {
        const mdl::RoleDef* rr = sub->role(sub_role);
        auto tracked = idles.find(man_role);
        if (!rr || tracked == idles.end()) continue;
        if (rr->entry_state == tracked->second) continue;
        std::string key = "entry/" + step.id + "/" + man_role + "/" + sead::to_string(tracked->second);
        if (reported.insert(key).second) {
          out.push_back({Severity::Error, mdl::rules::kEntryMismatch, "steps." + step.id,
                         man_role + " reaches this step as " + sead::to_string(tracked->second) +
                             " but " + inv.action + "/" + sub_role + " expects " +
                             sead::to_string(rr->entry_state)});
        }
      }
    }
    if (!resolved) continue;

    for (const auto& e : step.next) {
      if (e.on.size() != subs.size()) continue;
      auto next_idles = idles;
      bool branch_ok = true;
      for (std::size_t k = 0; k < subs.size(); ++k) {
        const mdl::ResultDef* rd = subs[k]->result(e.on[k]);
        if (!rd) {
          branch_ok = false;
          break;
        }
        for (const auto& [sub_role, man_role] : step.invoke[k].participants) {
          auto f = rd->final_states.find(sub_role);
          if (f != rd->final_states.end() && next_idles.count(man_role)) {
            next_idles[man_role] = f->second;
          }
        }
      }
      if (!branch_ok) continue;
      if (e.to == "TERMINATE") {
        for (const auto& [role, idle] : next_idles) {
          if (is_stable(idle)) continue;
          std::string key = "terminate/" + step.id + "/" + role + "/" + sead::to_string(idle);
          if (reported.insert(key).second) {
            out.push_back({Severity::Error, rules::kStabilityTerminalUnstable, "steps." + step.id,
                           "terminating after [" + join_labels(e.on) + "] leaves " + role + " " +
                               sead::to_string(idle)});
          }
        }
      } else if (auto it = step_index.find(e.to); it != step_index.end()) {
        work.push_back({it->second, std::move(next_idles)});
      }
    }
  }
  return out;
}

std::vector<mdl::Diagnostic> verify_document(const mdl::MdlDocument& doc,
                                             const mdl::Registry* registry) {
  std::vector<mdl::Diagnostic> out = mdl::validate(doc, registry);
  if (mdl::has_errors(out)) return out;
  if (doc.kind == mdl::MdlDocument::Kind::SubManoeuvre) {
    for (auto& d : check_synchronisation(doc)) out.push_back(std::move(d));
  }
  for (auto& d : check_stability(doc, registry)) out.push_back(std::move(d));
  return out;
}

}  // namespace sead::verify
