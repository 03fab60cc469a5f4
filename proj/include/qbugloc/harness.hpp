#pragma once

// Experiment harness: random segmented programs with injected single-gate
// bugs, the naive linear and central-binary baselines, corpus experiments
// with ablations, iterative multi-bug location and the return-risk estimate.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "qbugloc/circuit.hpp"
#include "qbugloc/locator.hpp"
#include "qbugloc/search_tree.hpp"
#include "qbugloc/stat_test.hpp"

namespace qbl {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer; decorrelates seeds derived from (base, stream, index).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index) {
  std::uint64_t z = base ^ (stream * 0x9E3779B97F4A7C15ULL) ^
                    (index * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL);
  for (int i = 0; i < 2; ++i) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
  }
  return z;
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Rejection sampling keeps draws unbiased and library-independent.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

struct GenSpec {
  int n_qubits = 2;
  int n_segments = 10;
  int n_gates = 30;
  std::uint64_t seed = 0;
  // Empty means every gate kind.
  std::vector<GateKind> gate_kinds;

  void validate() const {
    if (n_qubits < 1 || n_qubits > kMaxQubits) {
      throw HarnessError("n_qubits must be in 1.." + std::to_string(kMaxQubits));
    }
    if (n_segments < 2) throw HarnessError("n_segments must be at least 2");
    if (n_gates < n_segments) {
      throw HarnessError("n_gates must be at least n_segments");
    }
  }
};

namespace detail {

inline std::vector<GateKind> usable_kinds(const std::vector<GateKind>& allowed,
                                          int n_qubits, int only_arity = 0) {
  std::vector<GateKind> out;
  const auto& pool = allowed.empty()
                         ? std::vector<GateKind>(kAllGateKinds.begin(),
                                                 kAllGateKinds.end())
                         : allowed;
  for (GateKind k : pool) {
    if (arity(k) > n_qubits) continue;
    if (only_arity != 0 && arity(k) != only_arity) continue;
    out.push_back(k);
  }
  return out;
}

inline Gate random_gate(const std::vector<GateKind>& kinds, int n_qubits,
                        Rng& rng) {
  if (kinds.empty()) throw HarnessError("no usable gate kinds");
  Gate g;
  g.kind = kinds[uniform_index(rng, kinds.size())];
  const auto q0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n_qubits)));
  g.targets.push_back(q0);
  if (arity(g.kind) == 2) {
    auto q1 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n_qubits - 1)));
    if (q1 >= q0) ++q1;
    g.targets.push_back(q1);
  }
  if (param_count(g.kind) == 1) {
    g.params.push_back(uniform01(rng) * 2.0 * std::numbers::pi);
  }
  return g;
}

}  // namespace detail

/// Random program with uniformly drawn gates and a random composition of
/// gate counts over the segments (every segment nonempty).
inline SegmentedProgram generate_program(const GenSpec& spec, Rng& rng) {
  spec.validate();
  const auto kinds = detail::usable_kinds(spec.gate_kinds, spec.n_qubits);

  // Choose n_segments - 1 distinct cut points among 1..n_gates-1.
  std::vector<int> cuts(static_cast<std::size_t>(spec.n_gates - 1));
  std::iota(cuts.begin(), cuts.end(), 1);
  const auto n_cuts = static_cast<std::size_t>(spec.n_segments - 1);
  for (std::size_t i = 0; i < n_cuts; ++i) {
    const auto j = i + uniform_index(rng, cuts.size() - i);
    std::swap(cuts[i], cuts[j]);
  }
  cuts.resize(n_cuts);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(spec.n_gates);

  std::vector<Segment> segments;
  int prev = 0;
  for (int cut : cuts) {
    Segment s;
    for (int i = prev; i < cut; ++i) {
      s.gates.push_back(detail::random_gate(kinds, spec.n_qubits, rng));
    }
    segments.push_back(std::move(s));
    prev = cut;
  }
  return SegmentedProgram(spec.n_qubits, std::move(segments));
}

struct BugInjection {
  int segment = 1;
  int gate_position = 0;  // 0-based within the segment
  Gate original;
  Gate replacement;
};

/// Replaces gate `position` of `segment` in a copy of `program` with a
/// different random gate of the same arity.
inline std::pair<SegmentedProgram, BugInjection> inject_bug_at(
    const SegmentedProgram& program, int segment, int position, Rng& rng,
    const std::vector<GateKind>& allowed = {}) {
  SegmentedProgram buggy = program;
  Gate& target = buggy.mutable_segment(segment).gates.at(
      static_cast<std::size_t>(position));
  const auto kinds =
      detail::usable_kinds(allowed, program.n_qubits(), arity(target.kind));
  BugInjection inj{segment, position, target, target};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Gate g = detail::random_gate(kinds, program.n_qubits(), rng);
    if (!(g == target)) {
      inj.replacement = g;
      target = std::move(g);
      return {std::move(buggy), std::move(inj)};
    }
  }
  throw HarnessError("could not draw a replacement gate different from the original");
}

inline std::pair<SegmentedProgram, BugInjection> inject_bug(
    const SegmentedProgram& program, Rng& rng,
    const std::vector<GateKind>& allowed = {}) {
  const int seg = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(program.size())));
  const auto pos = static_cast<int>(uniform_index(rng, program.segment(seg).gate_count()));
  return inject_bug_at(program, seg, pos, rng, allowed);
}

/// One bug in each of `k` distinct segments, ordered by segment.
inline std::pair<SegmentedProgram, std::vector<BugInjection>> inject_bugs(
    const SegmentedProgram& program, int k, Rng& rng,
    const std::vector<GateKind>& allowed = {}) {
  if (k < 1 || k > program.size()) throw HarnessError("invalid bug count");
  std::vector<int> segs(static_cast<std::size_t>(program.size()));
  std::iota(segs.begin(), segs.end(), 1);
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    std::swap(segs[i], segs[i + uniform_index(rng, segs.size() - i)]);
  }
  segs.resize(static_cast<std::size_t>(k));
  std::sort(segs.begin(), segs.end());

  SegmentedProgram buggy = program;
  std::vector<BugInjection> out;
  for (int seg : segs) {
    const auto pos = static_cast<int>(uniform_index(rng, program.segment(seg).gate_count()));
    auto [next, inj] = inject_bug_at(buggy, seg, pos, rng, allowed);
    buggy = std::move(next);
    out.push_back(std::move(inj));
  }
  return {std::move(buggy), std::move(out)};
}

/// Sum over bases of | |a_ref|^2 - |a_bug|^2 | at the full program output.
inline double output_difference(const SegmentedProgram& reference,
                                const SegmentedProgram& buggy) {
  if (reference.n_qubits() != buggy.n_qubits() ||
      reference.size() != buggy.size()) {
    throw HarnessError("programs differ in shape");
  }
  const auto a = run_prefix(reference, reference.size()).probabilities();
  const auto b = run_prefix(buggy, buggy.size()).probabilities();
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(a[i] - b[i]);
  return sum;
}

/// True when the bug changes the output distribution by more than `threshold`.
inline bool detectability_filter(const SegmentedProgram& reference,
                                 const SegmentedProgram& buggy,
                                 double threshold = 0.05) {
  return output_difference(reference, buggy) > threshold;
}

/// Oracles for every segment from the bug-free program. With `limited_bases`
/// > 0 each oracle declares at most that many possible bases.
inline OracleSet reference_oracles(const SegmentedProgram& reference,
                                   std::size_t limited_bases, Rng& rng) {
  OracleSet out;
  const auto states = all_prefix_states(reference);
  for (int k = 1; k <= reference.size(); ++k) {
    const auto& s = states[static_cast<std::size_t>(k)];
    out.emplace(k, limited_bases == 0 ? oracle_from_state(s)
                                      : limited_oracle(s, limited_bases, rng));
  }
  return out;
}

inline OracleSet reference_oracles(const SegmentedProgram& reference) {
  Rng unused(0);
  return reference_oracles(reference, 0, unused);
}

/// Tests s_1, s_2, ... in order with strict thresholds only. The first
/// buggy prefix locates its segment; if s_1..s_{l-1} all pass, s_l is
/// reported.
inline LocateResult linear_locate(std::span<const double> costs,
                                  MeasurementBackend& backend,
                                  const OracleSet& oracles,
                                  const SearchConfig& cfg, Rng& rng) {
  cfg.validate();
  const int l = static_cast<int>(costs.size());
  LocateResult result;
  for (int x = 1; x <= l - 1; ++x) {
    const auto& oracle = oracle_for(oracles, x);
    const auto cost = static_cast<std::uint64_t>(std::llround(costs[static_cast<std::size_t>(x - 1)]));
    CountsMap acc(backend.n_qubits());
    Determination d = Determination::Undetermined;
    while (!is_finalized(d)) {
      if (acc.total_shots() >= cfg.m_max) {
        return detail::fail(std::move(result),
                            "segment " + std::to_string(x) +
                                " reached the measurement limit");
      }
      const std::uint64_t shots = std::min(cfg.m_unit, cfg.m_max - acc.total_shots());
      acc.merge(backend.measure(x, shots, rng));
      result.total_gate_cost += shots * cost;
      result.total_shots += shots;
      const auto outcome = chi_square_test(acc, oracle, cfg.thresholds.sig);
      d = classify(outcome, cfg.thresholds, /*allow_early=*/false);
      result.trace.push_back({x - 1, x, shots, outcome.p_value, outcome.power,
                              d, result.total_gate_cost});
    }
    if (d == Determination::LeftFinalized) {
      result.status = LocateStatus::Located;
      result.segment = x;
      return result;
    }
  }
  result.status = LocateStatus::Located;
  result.segment = l;
  return result;
}

inline LocateResult linear_locate(const SegmentedProgram& program,
                                  const OracleSet& oracles,
                                  const SearchConfig& cfg, Rng& rng) {
  SimulatorBackend backend(program);
  const auto costs = prefix_costs(program);
  return linear_locate(costs, backend, oracles, cfg, rng);
}

/// Ordinary binary search: central middle, strict thresholds, no looking
/// back and no finalization.
inline LocateResult naive_binary_locate(std::span<const double> costs,
                                        MeasurementBackend& backend,
                                        const OracleSet& oracles,
                                        const SearchConfig& cfg, Rng& rng) {
  auto tree = SearchTree::compose(costs, MiddleRule::Central);
  return locate(tree, backend, oracles, cfg, rng,
                SearchFeatures{.early = false, .finalization = false, .lookback = false});
}

inline LocateResult naive_binary_locate(const SegmentedProgram& program,
                                        const OracleSet& oracles,
                                        const SearchConfig& cfg, Rng& rng) {
  SimulatorBackend backend(program);
  const auto costs = prefix_costs(program);
  return naive_binary_locate(costs, backend, oracles, cfg, rng);
}

/// Each flag turns off exactly one technique of the proposed search.
struct Ablations {
  bool no_cost_tree = false;
  bool no_early = false;
  bool no_finalization = false;
  bool no_lookback = false;

  bool any() const { return no_cost_tree || no_early || no_finalization || no_lookback; }
  friend bool operator==(const Ablations&, const Ablations&) = default;
};

inline LocateResult proposed_locate(std::span<const double> costs,
                                    MeasurementBackend& backend,
                                    const OracleSet& oracles,
                                    const SearchConfig& cfg, Rng& rng,
                                    const Ablations& ablations = {}) {
  auto tree = SearchTree::compose(
      costs, ablations.no_cost_tree ? MiddleRule::Central : MiddleRule::CostBased);
  return locate(tree, backend, oracles, cfg, rng,
                SearchFeatures{.early = !ablations.no_early,
                               .finalization = !ablations.no_finalization,
                               .lookback = !ablations.no_lookback});
}

inline LocateResult proposed_locate(const SegmentedProgram& program,
                                    const OracleSet& oracles,
                                    const SearchConfig& cfg, Rng& rng,
                                    const Ablations& ablations = {}) {
  SimulatorBackend backend(program);
  const auto costs = prefix_costs(program);
  return proposed_locate(costs, backend, oracles, cfg, rng, ablations);
}

enum class Method { Proposed, Linear, Binary };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::Linear: return "linear";
    case Method::Binary: return "binary";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  for (Method m : {Method::Proposed, Method::Linear, Method::Binary}) {
    if (to_string(m) == s) return m;
  }
  throw HarnessError("unknown method '" + std::string(s) + "'");
}

inline LocateResult run_method(Method m, std::span<const double> costs,
                               MeasurementBackend& backend,
                               const OracleSet& oracles, const SearchConfig& cfg,
                               Rng& rng, const Ablations& ablations = {}) {
  switch (m) {
    case Method::Proposed:
      return proposed_locate(costs, backend, oracles, cfg, rng, ablations);
    case Method::Linear: return linear_locate(costs, backend, oracles, cfg, rng);
    case Method::Binary: return naive_binary_locate(costs, backend, oracles, cfg, rng);
  }
  throw HarnessError("unknown method");
}

enum class BackendKind { Simulator, Exact };

inline std::unique_ptr<MeasurementBackend> make_backend(
    BackendKind kind, const SegmentedProgram& program) {
  if (kind == BackendKind::Exact) return std::make_unique<ExactCountsBackend>(program);
  return std::make_unique<SimulatorBackend>(program);
}

struct MultiBugResult {
  LocateStatus status = LocateStatus::Failed;
  std::vector<int> located;  // in the order found
  std::uint64_t total_gate_cost = 0;
  std::uint64_t total_shots = 0;
  bool all_found = false;
  std::string failure_reason;
};

/// Tests the whole-program output with strict thresholds. Returns whether a
/// bug is still present, or nullopt when the budget runs out.
inline std::optional<bool> whole_program_has_bug(std::span<const double> costs,
                                                 MeasurementBackend& backend,
                                                 const OracleSet& oracles,
                                                 const SearchConfig& cfg,
                                                 Rng& rng, std::uint64_t& cost,
                                                 std::uint64_t& shots_used) {
  const int l = static_cast<int>(costs.size());
  const auto& oracle = oracle_for(oracles, l);
  const auto c = static_cast<std::uint64_t>(std::llround(costs.back()));
  CountsMap acc(backend.n_qubits());
  while (acc.total_shots() < cfg.m_max) {
    const std::uint64_t shots = std::min(cfg.m_unit, cfg.m_max - acc.total_shots());
    acc.merge(backend.measure(l, shots, rng));
    cost += shots * c;
    shots_used += shots;
    const auto d = classify(chi_square_test(acc, oracle, cfg.thresholds.sig),
                            cfg.thresholds, false);
    if (d == Determination::LeftFinalized) return true;
    if (d == Determination::RightFinalized) return false;
  }
  return std::nullopt;
}

/// Locate, restore the located segment from `reference`, re-test the whole
/// program, and repeat until it passes. Succeeds when exactly the injected
/// segments were found.
inline MultiBugResult iterative_multibug_locate(
    const SegmentedProgram& reference, const SegmentedProgram& buggy,
    const std::vector<BugInjection>& injections, const OracleSet& oracles,
    const SearchConfig& cfg, Rng& rng, Method method = Method::Proposed,
    const Ablations& ablations = {}, BackendKind backend_kind = BackendKind::Simulator) {
  MultiBugResult out;
  SegmentedProgram current = buggy;
  const auto costs = prefix_costs(reference);
  std::set<int> expected;
  for (const auto& inj : injections) expected.insert(inj.segment);

  for (int round = 0; round < reference.size(); ++round) {
    auto backend = make_backend(backend_kind, current);
    const auto r = run_method(method, costs, *backend, oracles, cfg, rng, ablations);
    out.total_gate_cost += r.total_gate_cost;
    out.total_shots += r.total_shots;
    if (!r.located()) {
      out.failure_reason = r.failure_reason;
      return out;
    }
    out.located.push_back(*r.segment);
    current.mutable_segment(*r.segment) = reference.segment(*r.segment);

    auto after = make_backend(backend_kind, current);
    const auto still_buggy = whole_program_has_bug(
        costs, *after, oracles, cfg, rng, out.total_gate_cost, out.total_shots);
    if (!still_buggy) {
      out.failure_reason = "whole-program re-test reached the measurement limit";
      return out;
    }
    if (!*still_buggy) {
      out.status = LocateStatus::Located;
      out.all_found = std::set<int>(out.located.begin(), out.located.end()) == expected &&
                      out.located.size() == expected.size();
      return out;
    }
  }
  out.failure_reason = "bug persists after fixing every segment once";
  return out;
}

/// Estimated probability of returning to a node after `w` same-direction
/// edges: (alpha / (1 - beta))^w * (l - x), clamped to [0, 1].
inline double return_probability(double alpha, double beta, int w, int path_len,
                                  int x, int l) {
  if (!(alpha > 0 && alpha < 1) || !(beta > 0 && beta < 1)) {
    throw HarnessError("alpha and beta must lie in (0, 1)");
  }
  if (w < 1 || w > path_len) throw HarnessError("need 1 <= w <= path_len");
  if (x < 1 || x >= l) throw HarnessError("need 1 <= x < l");
  const double r = std::pow(alpha / (1.0 - beta), w) * static_cast<double>(l - x);
  return std::clamp(r, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Corpus experiments

struct ExperimentConfig {
  GenSpec gen;
  std::size_t corpus_size = 100;
  SearchConfig search;
  Ablations ablations;
  std::vector<Method> methods = {Method::Proposed, Method::Linear, Method::Binary};
  bool filter = true;
  double filter_threshold = 0.05;
  std::size_t limited_bases = 0;  // 0 = full oracles
  int bugs_per_program = 1;
  BackendKind backend = BackendKind::Simulator;
  std::size_t max_attempts_per_program = 50;
  unsigned threads = 0;  // 0 = hardware concurrency

  void validate() const {
    gen.validate();
    search.validate();
    if (corpus_size < 1) throw HarnessError("corpus_size must be at least 1");
    if (methods.empty()) throw HarnessError("no methods requested");
    if (bugs_per_program < 1 || bugs_per_program > gen.n_segments) {
      throw HarnessError("bugs_per_program must be in 1..n_segments");
    }
  }
};

struct CorpusEntry {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  SegmentedProgram reference;
  SegmentedProgram buggy;
  std::vector<BugInjection> injections;
  double output_difference = 0;
};

/// Draws programs until `corpus_size` pass the filter. Attempt i uses the
/// seed derive_seed(gen.seed, 0, i).
inline std::vector<CorpusEntry> generate_corpus(const ExperimentConfig& cfg) {
  std::vector<CorpusEntry> out;
  const std::size_t max_attempts = cfg.corpus_size * cfg.max_attempts_per_program;
  for (std::size_t attempt = 0; out.size() < cfg.corpus_size; ++attempt) {
    if (attempt >= max_attempts) {
      throw HarnessError("corpus generation starved: only " +
                         std::to_string(out.size()) + " of " +
                         std::to_string(cfg.corpus_size) +
                         " programs passed the filter in " +
                         std::to_string(max_attempts) + " attempts");
    }
    const std::uint64_t seed = derive_seed(cfg.gen.seed, 0, attempt);
    Rng rng(seed);
    auto reference = generate_program(cfg.gen, rng);
    auto [buggy, injections] =
        inject_bugs(reference, cfg.bugs_per_program, rng, cfg.gen.gate_kinds);
    const double diff = output_difference(reference, buggy);
    if (cfg.filter && !(diff > cfg.filter_threshold)) continue;
    out.push_back(CorpusEntry{out.size(), seed, std::move(reference),
                              std::move(buggy), std::move(injections), diff});
  }
  return out;
}

struct RunOutcome {
  bool success = false;
  std::uint64_t cost = 0;
  std::uint64_t shots = 0;
};

struct MethodStats {
  Method method = Method::Proposed;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double success_probability = 0;
  std::optional<double> avg_cost_success;
  double avg_cost_all = 0;
  double avg_shots_all = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::uint64_t> corpus_seeds;
  std::vector<MethodStats> methods;
  // runs[m][i]: method m on corpus entry i
  std::vector<std::vector<RunOutcome>> runs;

  const MethodStats& stats(Method m) const {
    for (const auto& s : methods) {
      if (s.method == m) return s;
    }
    throw HarnessError("method not in report");
  }
};

inline RunOutcome run_entry(const CorpusEntry& entry, Method method,
                            const ExperimentConfig& cfg) {
  Rng oracle_rng(derive_seed(cfg.gen.seed, 2, entry.index));
  const OracleSet oracles =
      reference_oracles(entry.reference, cfg.limited_bases, oracle_rng);
  Rng rng(derive_seed(cfg.gen.seed, 1, entry.index));
  const Ablations abl = method == Method::Proposed ? cfg.ablations : Ablations{};

  if (cfg.bugs_per_program > 1) {
    const auto r = iterative_multibug_locate(entry.reference, entry.buggy,
                                             entry.injections, oracles, cfg.search,
                                             rng, method, abl, cfg.backend);
    return {r.all_found, r.total_gate_cost, r.total_shots};
  }
  auto backend = make_backend(cfg.backend, entry.buggy);
  const auto costs = prefix_costs(entry.reference);
  const auto r = run_method(method, costs, *backend, oracles, cfg.search, rng, abl);
  const bool ok = r.located() && *r.segment == entry.injections.front().segment;
  return {ok, r.total_gate_cost, r.total_shots};
}

inline MethodStats summarize(Method m, const std::vector<RunOutcome>& runs) {
  MethodStats s;
  s.method = m;
  s.runs = runs.size();
  double cost_all = 0, cost_ok = 0, shots_all = 0;
  std::size_t ok = 0;
  for (const auto& r : runs) {
    cost_all += static_cast<double>(r.cost);
    shots_all += static_cast<double>(r.shots);
    if (r.success) {
      ++ok;
      cost_ok += static_cast<double>(r.cost);
    }
  }
  s.failures = s.runs - ok;
  const double n = static_cast<double>(s.runs);
  s.success_probability = static_cast<double>(ok) / n;
  s.avg_cost_all = cost_all / n;
  s.avg_shots_all = shots_all / n;
  if (ok > 0) s.avg_cost_success = cost_ok / static_cast<double>(ok);
  return s;
}

/// Generates the corpus and runs every requested method on every entry.
/// Runs are distributed over worker threads; results are indexed by entry so
/// the report does not depend on scheduling.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto corpus = generate_corpus(cfg);

  ExperimentReport report;
  report.config = cfg;
  for (const auto& e : corpus) report.corpus_seeds.push_back(e.seed);
  report.runs.assign(cfg.methods.size(), std::vector<RunOutcome>(corpus.size()));

  const std::size_t jobs = corpus.size() * cfg.methods.size();
  unsigned workers = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
      const std::size_t m = j / corpus.size();
      const std::size_t i = j % corpus.size();
      try {
        report.runs[m][i] = run_entry(corpus[i], cfg.methods[m], cfg);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    report.methods.push_back(summarize(cfg.methods[m], report.runs[m]));
  }
  return report;
}

}  // namespace qbl
