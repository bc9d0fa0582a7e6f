#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sead/catalogue.hpp"
#include "sead/mdl.hpp"
#include "sead/simulation.hpp"
#include "sead/verification.hpp"

namespace fs = std::filesystem;
using namespace sead;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotQuiescent = 3;

struct FileDiag {
  std::string file;
  mdl::Diagnostic diag;
};

std::vector<std::string> expand_mdl_paths(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 9 &&
            name.substr(name.size() - 9) == ".mdl.json")
          found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void print_diags(const std::vector<FileDiag>& diags, bool as_json) {
  if (as_json) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : diags)
      out.push_back({{"file", d.file},
                     {"severity",
                      d.diag.severity == mdl::Diagnostic::Severity::Error ? "error" : "warning"},
                     {"rule", d.diag.rule},
                     {"path", d.diag.path},
                     {"message", d.diag.message}});
    std::cout << out.dump(2) << "\n";
    return;
  }
  for (const auto& d : diags)
    std::cerr << d.file << ": "
              << (d.diag.severity == mdl::Diagnostic::Severity::Error ? "error " : "warning ")
              << d.diag.rule << " at " << d.diag.path << ": " << d.diag.message << "\n";
}

// Loads every path into one registry; parse/schema failures become diagnostics.
int load_documents(const std::vector<std::string>& paths, mdl::Registry& registry,
                   std::vector<FileDiag>& diags,
                   std::vector<std::pair<std::string, ActionId>>& loaded) {
  for (const auto& p : paths) {
    if (!fs::exists(p)) {
      std::cerr << "sead: no such file: " << p << "\n";
      return kExitUsage;
    }
    try {
      mdl::MdlDocument doc = mdl::load_document(p);
      ActionId id = doc.id;
      registry.add(std::move(doc));
      loaded.push_back({p, id});
    } catch (const mdl::ParseError& e) {
      diags.push_back({p, {mdl::Diagnostic::Severity::Error, "PARSE_ERROR", p, e.what()}});
    } catch (const mdl::SchemaError& e) {
      diags.push_back({p, {mdl::Diagnostic::Severity::Error, "SCHEMA_ERROR", e.path, e.what()}});
    } catch (const DomainError& e) {
      diags.push_back({p, {mdl::Diagnostic::Severity::Error, "SCHEMA_ERROR", p, e.what()}});
    }
  }
  return kExitOk;
}

int cmd_check(const std::vector<std::string>& inputs, bool as_json, bool run_verifier,
              bool enumerate) {
  auto paths = expand_mdl_paths(inputs);
  if (paths.empty()) {
    std::cerr << "sead: no .mdl.json inputs\n";
    return kExitUsage;
  }
  mdl::Registry registry;
  std::vector<FileDiag> diags;
  std::vector<std::pair<std::string, ActionId>> loaded;
  if (int rc = load_documents(paths, registry, diags, loaded); rc != kExitOk) return rc;

  for (const auto& [file, id] : loaded) {
    const mdl::MdlDocument& doc = registry.at(id);
    auto ds = run_verifier ? verify::verify_document(doc, &registry)
                           : mdl::validate(doc, &registry);
    for (auto& d : ds) diags.push_back({file, std::move(d)});
  }

  if (enumerate) {
    for (const auto& [file, id] : loaded) {
      const mdl::MdlDocument& doc = registry.at(id);
      if (doc.kind != mdl::MdlDocument::Kind::SubManoeuvre) continue;
      std::cout << doc.id << ":";
      for (const auto& o : verify::enumerate_outcomes(doc)) std::cout << " " << to_string(o);
      std::cout << "\n";
    }
  }

  print_diags(diags, as_json);
  return mdl::has_errors([&] {
           std::vector<mdl::Diagnostic> flat;
           for (const auto& d : diags) flat.push_back(d.diag);
           return flat;
         }())
             ? kExitFindings
             : kExitOk;
}

// ---------------------------------------------------------------------------
// DOT export
// ---------------------------------------------------------------------------

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string event_label(const mdl::EventPattern& on) {
  using K = mdl::EventPattern::Kind;
  switch (on.kind) {
    case K::Msg: {
      std::string s = on.msg_kind ? to_string(*on.msg_kind) : "msg";
      if (on.msg_action) s += "/" + *on.msg_action;
      return s;
    }
    case K::Timeout: return "timeout";
    case K::Arrived: return "arrived";
    case K::Done: return "done";
    case K::Policy: return on.policy_accept ? "policy:accept" : "policy:reject";
  }
  return "?";
}

void export_dot(const mdl::MdlDocument& doc, std::ostream& os) {
  auto node = [&](const std::string& a, const std::string& b) {
    return "\"" + dot_escape(a) + "." + dot_escape(b) + "\"";
  };
  os << "digraph \"" << dot_escape(doc.id) << "\" {\n  rankdir=LR;\n";
  if (doc.kind == mdl::MdlDocument::Kind::Manoeuvre) {
    os << "  node [shape=box];\n";
    for (const auto& step : doc.steps) {
      std::string invoked;
      for (const auto& inv : step.invoke)
        invoked += (invoked.empty() ? "" : " | ") + inv.action;
      os << "  " << node(doc.id, step.id) << " [label=\"" << dot_escape(step.id) << "\\n"
         << dot_escape(invoked) << "\"];\n";
    }
    os << "  " << node(doc.id, "TERMINATE") << " [shape=doublecircle, label=\"TERMINATE\"];\n";
    for (const auto& step : doc.steps)
      for (const auto& n : step.next) {
        std::string label;
        for (const auto& l : n.on) label += (label.empty() ? "" : ",") + l;
        os << "  " << node(doc.id, step.id) << " -> " << node(doc.id, n.to) << " [label=\""
           << dot_escape(label) << "\"];\n";
      }
  } else {
    for (const auto& role : doc.roles) {
      os << "  subgraph \"cluster_" << dot_escape(doc.id) << "_" << dot_escape(role.name)
         << "\" {\n    label=\"" << dot_escape(role.name) << " ("
         << to_string(role.entry_state) << ")\";\n";
      auto states = doc.states.find(role.name);
      if (states != doc.states.end())
        for (const auto& [sid, st] : states->second) {
          bool start = sid == role.start;
          os << "    " << node(doc.id + "/" + role.name, sid) << " [label=\"" << dot_escape(sid)
             << "\"" << (start ? ", penwidth=2" : "") << "];\n";
        }
      for (const auto& res : doc.results) {
        auto fin = res.final_states.find(role.name);
        std::string label = res.label;
        if (fin != res.final_states.end()) label += "\\n" + to_string(fin->second);
        os << "    " << node(doc.id + "/" + role.name, res.label)
           << " [shape=doublecircle, label=\"" << dot_escape(label) << "\"];\n";
      }
      if (states != doc.states.end())
        for (const auto& [sid, st] : states->second)
          for (const auto& tr : st.transitions)
            os << "    " << node(doc.id + "/" + role.name, sid) << " -> "
               << node(doc.id + "/" + role.name, tr.to) << " [label=\""
               << dot_escape(event_label(tr.on)) << "\"];\n";
      os << "  }\n";
    }
  }
  os << "}\n";
}

int cmd_export_dot(const std::vector<std::string>& inputs, const std::string& dot_out) {
  auto paths = expand_mdl_paths(inputs);
  if (paths.empty()) {
    std::cerr << "sead: no .mdl.json inputs\n";
    return kExitUsage;
  }
  mdl::Registry registry;
  std::vector<FileDiag> diags;
  std::vector<std::pair<std::string, ActionId>> loaded;
  if (int rc = load_documents(paths, registry, diags, loaded); rc != kExitOk) return rc;
  if (!diags.empty()) {
    print_diags(diags, false);
    return kExitFindings;
  }
  std::ostringstream body;
  for (const auto& [file, id] : loaded) export_dot(registry.at(id), body);
  if (dot_out.empty() || dot_out == "-") {
    std::cout << body.str();
  } else {
    std::ofstream out(dot_out);
    if (!out) {
      std::cerr << "sead: cannot write " << dot_out << "\n";
      return kExitUsage;
    }
    out << body.str();
  }
  return kExitOk;
}

int cmd_format(const std::vector<std::string>& inputs, bool check) {
  auto paths = expand_mdl_paths(inputs);
  if (paths.empty()) {
    std::cerr << "sead: no .mdl.json inputs\n";
    return kExitUsage;
  }
  int findings = 0;
  for (const auto& p : paths) {
    if (!fs::exists(p)) {
      std::cerr << "sead: no such file: " << p << "\n";
      return kExitUsage;
    }
    std::string text;
    std::string canon;
    try {
      text = read_file(p);
      canon = mdl::serialize_document(mdl::parse_document(text));
    } catch (const std::exception& e) {
      std::cerr << p << ": " << e.what() << "\n";
      return kExitFindings;
    }
    if (text == canon) continue;
    if (check) {
      std::cerr << p << ": not in canonical form\n";
      ++findings;
    } else {
      std::ofstream out(p, std::ios::trunc);
      out << canon;
    }
  }
  return findings ? kExitFindings : kExitOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunResult {
  std::string file;
  nlohmann::json summary;
  bool quiescent = false;
  bool failed = false;
  std::string error;
};

int cmd_run(const std::vector<std::string>& scenarios, std::uint64_t seed,
            const std::string& config_path, double drop, bool drop_set,
            const std::string& trace_path, const std::string& dot_path, int jobs, bool as_json) {
  static mdl::CompileResult compiled = mdl::compile(catalogue::builtin_registry());
  if (!compiled.ok()) {
    std::cerr << "sead: builtin catalogue failed to compile\n";
    return kExitFindings;
  }

  sim::SimConfig base;
  try {
    if (const char* env = std::getenv("SEAD_CONFIG"); env && *env)
      base = sim::config_from_json(nlohmann::json::parse(read_file(env)), base);
    if (!config_path.empty())
      base = sim::config_from_json(nlohmann::json::parse(read_file(config_path)), base);
  } catch (const std::exception& e) {
    std::cerr << "sead: config: " << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<RunResult> results(scenarios.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t i = cursor.fetch_add(1); i < scenarios.size(); i = cursor.fetch_add(1)) {
      RunResult& r = results[i];
      r.file = scenarios[i];
      try {
        sim::Scenario sc = sim::load_scenario(scenarios[i], base);
        if (drop_set) sc.config.drop_rate = drop;
        std::string name = sc.name;
        sim::Simulation s(std::move(sc), &compiled.behaviour, seed);
        std::ofstream trace;
        std::ostream* sink = nullptr;
        if (!trace_path.empty()) {
          std::string path = scenarios.size() == 1 ? trace_path
                                                   : trace_path + "." + name + ".jsonl";
          trace.open(path, std::ios::trunc);
          if (!trace) throw DomainError("cannot write trace " + path);
          sink = &trace;
        }
        auto out = s.run(sink);
        r.summary = std::move(out.json);
        r.quiescent = out.quiescent;
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
    }
  };
  int n = std::max(1, std::min<int>(jobs, static_cast<int>(scenarios.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (!dot_path.empty()) {
    std::ofstream out(dot_path);
    if (!out) {
      std::cerr << "sead: cannot write " << dot_path << "\n";
      return kExitUsage;
    }
    std::set<ActionId> exported;
    for (const auto& r : results) {
      if (r.failed) continue;
      for (const auto& inst : r.summary.value("instances", nlohmann::json::array())) {
        ActionId action = inst.at("action").get<std::string>();
        if (!exported.insert(action).second) continue;
        if (const mdl::MdlDocument* doc = compiled.behaviour.registry->find(action))
          export_dot(*doc, out);
      }
    }
  }

  bool any_failed = false, any_restless = false;
  nlohmann::json machine = nlohmann::json::array();
  for (const auto& r : results) {
    if (r.failed) {
      any_failed = true;
      std::cerr << r.file << ": " << r.error << "\n";
      continue;
    }
    if (!r.quiescent) any_restless = true;
    if (as_json) {
      machine.push_back(r.summary);
      continue;
    }
    const auto& s = r.summary;
    std::cout << s.at("name").get<std::string>() << " seed " << seed << ": "
              << (r.quiescent ? "quiescent" : "NOT QUIESCENT") << " at t="
              << s.at("t_end").get<double>() << " s, " << s.at("messages").size()
              << " messages, " << s.at("warnings").get<int>() << " warnings\n";
    const auto& instances = s.at("instances");
    if (!instances.empty()) {
      std::cout << "  vehicle  action        result      duration_s  messages\n";
      for (const auto& i : instances) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-8s %-13s %-11s %-11.1f %zu\n",
                      i.at("vehicle").get<std::string>().c_str(),
                      i.at("action").get<std::string>().c_str(),
                      ("[" + i.at("result").get<std::string>() + "]").c_str(),
                      i.at("duration_s").get<double>(),
                      static_cast<std::size_t>(i.at("messages").get<std::uint64_t>()));
        std::cout << line;
      }
    }
    for (const auto& [veh, st] : s.at("final").items())
      std::cout << "  " << veh << ": " << st.at("idle").get<std::string>() << " leader "
                << st.at("leader").get<std::string>() << " members "
                << st.at("members").dump() << "\n";
  }
  if (as_json) std::cout << machine.dump(2) << "\n";

  if (any_failed) return kExitUsage;
  return any_restless ? kExitNotQuiescent : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manoeuvre catalogue tool: validate, verify, simulate, export"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable output");

  std::vector<std::string> val_paths;
  auto* validate = app.add_subcommand("validate", "structural validation of manoeuvre documents");
  validate->add_option("paths", val_paths, "files or directories")->required();

  std::vector<std::string> ver_paths;
  bool enumerate = false;
  auto* verify = app.add_subcommand("verify", "validation plus exhaustive interleaving analysis");
  verify->add_option("paths", ver_paths, "files or directories")->required();
  verify->add_flag("--enumerate", enumerate, "print every reachable outcome per sub-manoeuvre");

  std::vector<std::string> run_paths;
  std::uint64_t seed = 0;
  std::string config_path, trace_path, dot_path;
  double drop = 0.0;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "simulate scenarios to quiescence");
  run->add_option("scenarios", run_paths, "scenario JSON files")->required();
  run->add_option("--seed", seed, "RNG seed");
  auto* drop_opt = run->add_option("--drop", drop, "message drop probability override");
  run->add_option("--config", config_path, "JSON config overlay (after SEAD_CONFIG)");
  run->add_option("--trace", trace_path, "write JSONL trace here");
  run->add_option("--dot", dot_path, "export the graphs of every manoeuvre the run used");
  run->add_option("--jobs", jobs, "parallel scenario workers")->check(CLI::PositiveNumber);

  std::vector<std::string> dot_inputs;
  std::string dot_out;
  auto* exp = app.add_subcommand("export-dot", "emit Graphviz for manoeuvre documents");
  exp->add_option("paths", dot_inputs, "files or directories")->required();
  exp->add_option("--dot", dot_out, "output file (default stdout)");

  std::vector<std::string> fmt_paths;
  bool fmt_check = false;
  auto* fmt = app.add_subcommand("format", "rewrite documents in canonical form");
  fmt->add_option("paths", fmt_paths, "files or directories")->required();
  fmt->add_flag("--check", fmt_check, "report non-canonical files instead of rewriting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_check(val_paths, as_json, false, false);
    if (verify->parsed()) return cmd_check(ver_paths, as_json, true, enumerate);
    if (run->parsed())
      return cmd_run(run_paths, seed, config_path, drop, drop_opt->count() > 0, trace_path,
                     dot_path, jobs, as_json);
    if (exp->parsed()) return cmd_export_dot(dot_inputs, dot_out);
    if (fmt->parsed()) return cmd_format(fmt_paths, fmt_check);
  } catch (const std::exception& e) {
    std::cerr << "sead: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
