#pragma once

// JSON file formats: circuits, oracles, injections, tree dumps, locate
// results and traces, experiment configs and reports.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qbugloc/circuit.hpp"
#include "qbugloc/harness.hpp"
#include "qbugloc/locator.hpp"
#include "qbugloc/search_tree.hpp"
#include "qbugloc/stat_test.hpp"

namespace qbl::io {

using json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

/// Keys are emitted in sorted order, so dumps are canonical.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

inline const json& child(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get_field<T>(j, key) : fallback;
}

// --- circuits -------------------------------------------------------------

inline json to_json(const Gate& g) {
  json j{{"kind", std::string(to_string(g.kind))}, {"targets", g.targets}};
  if (!g.params.empty()) j["params"] = g.params;
  return j;
}

inline Gate gate_from_json(const json& j) {
  Gate g;
  g.kind = gate_kind_from_string(get_field<std::string>(j, "kind"));
  g.targets = get_field<std::vector<int>>(j, "targets");
  g.params = get_or<std::vector<double>>(j, "params", {});
  return g;
}

inline json to_json(const SegmentedProgram& p) {
  json segs = json::array();
  for (const auto& s : p.segments()) {
    json gates = json::array();
    for (const auto& g : s.gates) gates.push_back(to_json(g));
    segs.push_back(std::move(gates));
  }
  return json{{"n_qubits", p.n_qubits()}, {"segments", std::move(segs)}};
}

inline SegmentedProgram program_from_json(const json& j) {
  const int n = get_field<int>(j, "n_qubits");
  const json& segs = child(j, "segments");
  if (!segs.is_array()) throw FormatError("'segments' must be an array");
  std::vector<Segment> out;
  for (const auto& s : segs) {
    if (!s.is_array()) throw FormatError("each segment must be an array of gates");
    Segment seg;
    for (const auto& g : s) seg.gates.push_back(gate_from_json(g));
    out.push_back(std::move(seg));
  }
  try {
    return SegmentedProgram(n, std::move(out));
  } catch (const CircuitError& e) {
    throw FormatError(e.what());
  }
}

// --- oracles ----------------------------------------------------------------

inline json to_json(const CategoricalOracle& o) {
  json probs = json::object();
  for (const auto& [b, p] : o.probs) probs[bitstring(b, o.n_qubits)] = p;
  return json{{"restricted", o.restricted}, {"probs", std::move(probs)}};
}

inline CategoricalOracle oracle_from_json(const json& j) {
  CategoricalOracle o;
  o.restricted = get_or<bool>(j, "restricted", false);
  const json& probs = child(j, "probs");
  if (!probs.is_object() || probs.empty()) {
    throw FormatError("'probs' must be a nonempty object");
  }
  o.n_qubits = static_cast<int>(probs.begin().key().size());
  for (const auto& [bits, p] : probs.items()) {
    if (static_cast<int>(bits.size()) != o.n_qubits) {
      throw FormatError("oracle bitstrings differ in length");
    }
    o.probs[basis_index(bits)] = p.get<double>();
  }
  try {
    o.validate();
  } catch (const StatError& e) {
    throw FormatError(e.what());
  }
  return o;
}

inline json to_json(const CountsMap& c) {
  json j = json::object();
  for (const auto& [bits, n] : c.by_bitstring()) j[bits] = n;
  return j;
}

// --- injections ---------------------------------------------------------------

inline json to_json(const BugInjection& b) {
  return json{{"segment", b.segment},
              {"gate_position", b.gate_position},
              {"original", to_json(b.original)},
              {"replacement", to_json(b.replacement)}};
}

inline BugInjection injection_from_json(const json& j) {
  return BugInjection{get_field<int>(j, "segment"), get_field<int>(j, "gate_position"),
                      gate_from_json(child(j, "original")),
                      gate_from_json(child(j, "replacement"))};
}

// --- trees --------------------------------------------------------------------

/// Pre-order listing; "children" holds positions within the listing.
inline json tree_dump(const SearchTree& t) {
  json out = json::array();
  std::vector<int> order;
  std::vector<int> todo{0};
  while (!todo.empty()) {
    const int i = todo.back();
    todo.pop_back();
    order.push_back(i);
    if (!t.node(i).is_leaf()) {
      todo.push_back(t.node(i).right);
      todo.push_back(t.node(i).left);
    }
  }
  std::vector<int> pos(t.node_count(), -1);
  for (std::size_t k = 0; k < order.size(); ++k) {
    pos[static_cast<std::size_t>(order[k])] = static_cast<int>(k);
  }
  for (int i : order) {
    const auto& n = t.node(i);
    json e{{"range", {n.lo, n.hi}}};
    if (n.is_leaf()) {
      e["middle"] = nullptr;
      e["children"] = json::array();
    } else {
      e["middle"] = n.middle;
      e["children"] = {pos[static_cast<std::size_t>(n.left)],
                       pos[static_cast<std::size_t>(n.right)]};
    }
    out.push_back(std::move(e));
  }
  return out;
}

// --- locate results -------------------------------------------------------------

inline json to_json(const TraceRecord& r) {
  return json{{"node_segment", r.segment},
              {"shots", r.shots},
              {"p_value", r.p_value},
              {"power", r.power},
              {"dtmn", std::string(to_string(r.dtmn))},
              {"cumulative_cost", r.cumulative_cost}};
}

/// One compact JSON object per line.
inline std::string trace_jsonl(const LocateResult& r) {
  std::string out;
  for (const auto& rec : r.trace) out += to_json(rec).dump() + "\n";
  return out;
}

inline json to_json(const LocateResult& r) {
  json j{{"status", r.located() ? "Located" : "Failed"},
         {"total_gate_cost", r.total_gate_cost},
         {"total_shots", r.total_shots},
         {"batches", r.trace.size()}};
  j["segment"] = r.segment ? json(*r.segment) : json(nullptr);
  if (!r.located()) j["failure_reason"] = r.failure_reason;
  return j;
}

// --- configuration ------------------------------------------------------------

inline SearchConfig search_config_from_json(const json& j) {
  SearchConfig c;
  auto& th = c.thresholds;
  th.sig = get_or(j, "sig", th.sig);
  th.t_power = get_or(j, "t_power", th.t_power);
  th.sig_relaxed = get_or(j, "sig_relaxed", th.sig_relaxed);
  th.t_power_relaxed = get_or(j, "t_power_relaxed", th.t_power_relaxed);
  th.t_upper_p = get_or(j, "t_upper_p", th.t_upper_p);
  th.t_upper_p_relaxed = get_or(j, "t_upper_p_relaxed", th.t_upper_p_relaxed);
  c.d_lookback = get_or(j, "d_lookback", c.d_lookback);
  c.m_unit = get_or(j, "m_unit", c.m_unit);
  c.m_max = get_or(j, "m_max", c.m_max);
  c.whole_program_confirmed =
      get_or(j, "whole_program_confirmed", c.whole_program_confirmed);
  c.reset_on_flip = get_or(j, "reset_on_flip", c.reset_on_flip);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw FormatError(e.what());
  }
  return c;
}

inline json to_json(const SearchConfig& c) {
  const auto& th = c.thresholds;
  return json{{"sig", th.sig},
              {"t_power", th.t_power},
              {"sig_relaxed", th.sig_relaxed},
              {"t_power_relaxed", th.t_power_relaxed},
              {"t_upper_p", th.t_upper_p},
              {"t_upper_p_relaxed", th.t_upper_p_relaxed},
              {"d_lookback", c.d_lookback},
              {"m_unit", c.m_unit},
              {"m_max", c.m_max},
              {"whole_program_confirmed", c.whole_program_confirmed},
              {"reset_on_flip", c.reset_on_flip}};
}

inline json to_json(const GenSpec& g) {
  json kinds = json::array();
  for (GateKind k : g.gate_kinds) kinds.push_back(std::string(to_string(k)));
  return json{{"n_qubits", g.n_qubits},
              {"n_segments", g.n_segments},
              {"n_gates", g.n_gates},
              {"seed", g.seed},
              {"gate_kinds", std::move(kinds)}};
}

inline GenSpec gen_spec_from_json(const json& j) {
  GenSpec g;
  g.n_qubits = get_or(j, "n_qubits", g.n_qubits);
  g.n_segments = get_or(j, "n_segments", g.n_segments);
  g.n_gates = get_or(j, "n_gates", g.n_gates);
  g.seed = get_or(j, "seed", g.seed);
  try {
    for (const auto& k : get_or<std::vector<std::string>>(j, "gate_kinds", {})) {
      g.gate_kinds.push_back(gate_kind_from_string(k));
    }
    g.validate();
  } catch (const std::exception& e) {
    throw FormatError(e.what());
  }
  return g;
}

inline Ablations ablations_from_json(const json& j) {
  Ablations a;
  if (!j.is_array()) throw FormatError("'ablations' must be an array of names");
  for (const auto& v : j) {
    const auto name = v.get<std::string>();
    if (name == "no_cost_tree") a.no_cost_tree = true;
    else if (name == "no_early") a.no_early = true;
    else if (name == "no_finalization") a.no_finalization = true;
    else if (name == "no_lookback") a.no_lookback = true;
    else throw FormatError("unknown ablation '" + name + "'");
  }
  return a;
}

inline json to_json(const Ablations& a) {
  json j = json::array();
  if (a.no_cost_tree) j.push_back("no_cost_tree");
  if (a.no_early) j.push_back("no_early");
  if (a.no_finalization) j.push_back("no_finalization");
  if (a.no_lookback) j.push_back("no_lookback");
  return j;
}

/// Experiment config file:
///   { "gen": {...}, "search": {...}, "ablations": [...], "methods": [...],
///     "corpus_size": N, "filter": bool, "filter_threshold": x,
///     "limited_bases": k, "bugs_per_program": b, "backend": "simulator"|"exact",
///     "threads": t }
inline ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("experiment config must be an object");
  ExperimentConfig c;
  if (j.contains("gen")) c.gen = gen_spec_from_json(child(j, "gen"));
  if (j.contains("search")) c.search = search_config_from_json(child(j, "search"));
  if (j.contains("ablations")) c.ablations = ablations_from_json(child(j, "ablations"));
  if (j.contains("methods")) {
    c.methods.clear();
    try {
      for (const auto& m : child(j, "methods")) {
        c.methods.push_back(method_from_string(m.get<std::string>()));
      }
    } catch (const HarnessError& e) {
      throw FormatError(e.what());
    }
  }
  c.corpus_size = get_or(j, "corpus_size", c.corpus_size);
  c.filter = get_or(j, "filter", c.filter);
  c.filter_threshold = get_or(j, "filter_threshold", c.filter_threshold);
  c.limited_bases = get_or(j, "limited_bases", c.limited_bases);
  c.bugs_per_program = get_or(j, "bugs_per_program", c.bugs_per_program);
  c.threads = get_or(j, "threads", c.threads);
  const auto backend = get_or<std::string>(j, "backend", "simulator");
  if (backend == "simulator") c.backend = BackendKind::Simulator;
  else if (backend == "exact") c.backend = BackendKind::Exact;
  else throw FormatError("unknown backend '" + backend + "'");
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw FormatError(e.what());
  }
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
  // threads only affects scheduling and is left out so reports stay identical.
  return json{{"gen", to_json(c.gen)},
              {"search", to_json(c.search)},
              {"ablations", to_json(c.ablations)},
              {"methods", std::move(methods)},
              {"corpus_size", c.corpus_size},
              {"filter", c.filter},
              {"filter_threshold", c.filter_threshold},
              {"limited_bases", c.limited_bases},
              {"bugs_per_program", c.bugs_per_program},
              {"backend", c.backend == BackendKind::Exact ? "exact" : "simulator"}};
}

// --- reports ------------------------------------------------------------------

inline json to_json(const ExperimentReport& r) {
  json methods = json::array();
  for (const auto& s : r.methods) {
    methods.push_back(json{
        {"method", std::string(to_string(s.method))},
        {"runs", s.runs},
        {"failures", s.failures},
        {"success_probability", s.success_probability},
        {"avg_cost_success",
         s.avg_cost_success ? json(*s.avg_cost_success) : json(nullptr)},
        {"avg_cost_all", s.avg_cost_all},
        {"avg_shots_all", s.avg_shots_all}});
  }
  return json{{"config", to_json(r.config)},
              {"corpus_seeds", r.corpus_seeds},
              {"methods", std::move(methods)}};
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string report_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "method,qubits,segments,gates,success_prob,avg_cost_success,avg_cost_all\n";
  for (const auto& s : r.methods) {
    out << to_string(s.method) << ',' << r.config.gen.n_qubits << ','
        << r.config.gen.n_segments << ',' << r.config.gen.n_gates << ','
        << format_number(s.success_probability) << ','
        << (s.avg_cost_success ? format_number(*s.avg_cost_success) : "") << ','
        << format_number(s.avg_cost_all) << '\n';
  }
  return out.str();
}

}  // namespace qbl::io
