#pragma once

// Search loop over a composed tree: early determination on relaxed
// thresholds, finalization of the located segment's neighbours, and looking
// back at a suspicious node after a long run of same-direction edges.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qbugloc/circuit.hpp"
#include "qbugloc/search_tree.hpp"
#include "qbugloc/stat_test.hpp"

namespace qbl {

class LocateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchConfig {
  Thresholds thresholds;
  int d_lookback = 3;
  std::uint64_t m_unit = 100;
  std::uint64_t m_max = 100'000;
  bool whole_program_confirmed = true;
  // When a re-test makes a node abandon its previous direction, also clear
  // the determinations below it.
  bool reset_on_flip = false;

  void validate() const {
    thresholds.validate();
    if (m_unit < 1 || m_unit > m_max) {
      throw LocateError("need 1 <= m_unit <= m_max");
    }
    if (d_lookback < 2) throw LocateError("d_lookback must be at least 2");
  }
};

/// Switches for the individual search techniques.
struct SearchFeatures {
  bool early = true;
  bool finalization = true;
  bool lookback = true;
};

/// Oracle per tested segment, keyed by 1-based segment index.
using OracleSet = std::map<int, CategoricalOracle>;

inline const CategoricalOracle& oracle_for(const OracleSet& oracles, int segment) {
  auto it = oracles.find(segment);
  if (it == oracles.end()) {
    throw LocateError("no oracle for segment " + std::to_string(segment));
  }
  return it->second;
}

/// Source of Z-basis counts for the output state of prefix s_1..s_k.
class MeasurementBackend {
 public:
  virtual ~MeasurementBackend() = default;
  virtual int n_qubits() const = 0;
  virtual CountsMap measure(int prefix, std::uint64_t shots, Rng& rng) = 0;
};

/// Samples the program under test on the exact statevector simulator.
class SimulatorBackend final : public MeasurementBackend {
 public:
  explicit SimulatorBackend(SegmentedProgram program)
      : program_(std::move(program)) {
    const auto states = all_prefix_states(program_);
    samplers_.reserve(states.size());
    for (const auto& s : states) samplers_.emplace_back(s);
  }

  int n_qubits() const override { return program_.n_qubits(); }

  CountsMap measure(int prefix, std::uint64_t shots, Rng& rng) override {
    if (prefix < 0 || prefix > program_.size()) {
      throw LocateError("prefix out of range");
    }
    if (shots == 0) throw LocateError("shots must be at least 1");
    return samplers_[static_cast<std::size_t>(prefix)].sample(shots, rng);
  }

 private:
  SegmentedProgram program_;
  std::vector<BasisSampler> samplers_;
};

/// Deterministic backend returning counts exactly proportional to the true
/// prefix distribution (largest-remainder rounding). Ignores the RNG.
class ExactCountsBackend final : public MeasurementBackend {
 public:
  explicit ExactCountsBackend(const SegmentedProgram& program)
      : n_qubits_(program.n_qubits()) {
    for (const auto& s : all_prefix_states(program)) {
      probs_.push_back(s.probabilities());
    }
  }

  int n_qubits() const override { return n_qubits_; }

  CountsMap measure(int prefix, std::uint64_t shots, Rng&) override {
    if (prefix < 0 || prefix >= static_cast<int>(probs_.size())) {
      throw LocateError("prefix out of range");
    }
    const auto& p = probs_[static_cast<std::size_t>(prefix)];
    std::vector<std::uint64_t> whole(p.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::uint64_t assigned = 0;
    for (std::size_t b = 0; b < p.size(); ++b) {
      const double exact = p[b] * static_cast<double>(shots);
      whole[b] = static_cast<std::uint64_t>(std::floor(exact));
      assigned += whole[b];
      rem.emplace_back(exact - std::floor(exact), b);
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < shots && i < rem.size(); ++i, ++assigned) {
      ++whole[rem[i].second];
    }
    CountsMap c(n_qubits_);
    for (std::size_t b = 0; b < whole.size(); ++b) c.add(b, whole[b]);
    return c;
  }

 private:
  int n_qubits_;
  std::vector<std::vector<double>> probs_;
};

struct TraceRecord {
  int node = -1;
  int segment = 0;
  std::uint64_t shots = 0;
  double p_value = 1;
  double power = 0;
  Determination dtmn = Determination::Undetermined;
  std::uint64_t cumulative_cost = 0;
};

enum class LocateStatus { Located, Failed };

struct LocateResult {
  LocateStatus status = LocateStatus::Failed;
  std::optional<int> segment;
  std::uint64_t total_gate_cost = 0;
  std::uint64_t total_shots = 0;
  std::vector<TraceRecord> trace;
  std::string failure_reason;

  bool located() const { return status == LocateStatus::Located; }
};

/// Edge on the current search path: the node it leaves and its direction.
struct PathEdge {
  int node;
  bool left;
};

inline std::vector<PathEdge> current_path(const SearchTree& tree) {
  std::vector<PathEdge> path;
  int i = 0;
  while (!tree.node(i).is_leaf()) {
    const auto d = tree.node(i).dtmn;
    if (is_left(d)) {
      path.push_back({i, true});
      i = tree.node(i).left;
    } else if (is_right(d)) {
      path.push_back({i, false});
      i = tree.node(i).right;
    } else {
      break;
    }
  }
  return path;
}

/// Walk from the root following each node's determination; stops at the
/// first undetermined node or at a leaf.
inline int deepest_reachable(const SearchTree& tree) {
  const auto path = current_path(tree);
  if (path.empty()) return 0;
  const auto& last = tree.node(path.back().node);
  return path.back().left ? last.left : last.right;
}

/// Emitter of the last opposite-direction edge preceding a trailing run of at
/// least `d` same-direction edges. None when no such run or edge exists, or
/// when that node is already finalized.
inline std::optional<int> suspicious_node(const SearchTree& tree, int d) {
  const auto path = current_path(tree);
  if (path.empty()) return std::nullopt;
  std::size_t run = 1;
  while (run < path.size() &&
         path[path.size() - 1 - run].left == path.back().left) {
    ++run;
  }
  if (run < static_cast<std::size_t>(d) || run == path.size()) return std::nullopt;
  const int suspect = path[path.size() - 1 - run].node;
  if (is_finalized(tree.node(suspect).dtmn)) return std::nullopt;
  return suspect;
}

struct FinalizationTargets {
  std::optional<int> input;   // node testing s_{x-1}
  std::optional<int> output;  // node testing s_x
};

/// Nodes confirming that s_1..s_{x-1} is clean and s_1..s_x is buggy for the
/// leaf holding s_x. s_1 has no input node. s_l has no output node when the
/// whole program was confirmed buggy beforehand; otherwise the tree's
/// virtual node for s_l is used.
inline FinalizationTargets finalization_targets(const SearchTree& tree, int leaf,
                                                bool whole_program_confirmed) {
  const auto& n = tree.node(leaf);
  if (!n.is_leaf()) throw LocateError("finalization needs a leaf");
  const int x = n.lo;
  FinalizationTargets t;
  if (x > 1) t.input = tree.node_testing(x - 1);
  if (x < tree.segments()) {
    t.output = tree.node_testing(x);
  } else if (!whole_program_confirmed) {
    const int v = tree.node_testing(x);
    if (v < 0) throw LocateError("tree has no virtual node for the last segment");
    t.output = v;
  }
  return t;
}

namespace detail {

// Adds one batch to `node_index`, re-tests the accumulated counts and
// records the step. Returns false when the node's budget is exhausted.
inline bool measure_node(SearchTree& tree, int node_index,
                         MeasurementBackend& backend, const OracleSet& oracles,
                         const SearchConfig& cfg, bool allow_early, Rng& rng,
                         LocateResult& result) {
  auto& node = tree.node(node_index);
  if (node.num_m >= cfg.m_max) return false;
  const std::uint64_t shots = std::min(cfg.m_unit, cfg.m_max - node.num_m);
  const int seg = node.middle;
  const CategoricalOracle& oracle = oracle_for(oracles, seg);

  CountsMap batch = backend.measure(seg, shots, rng);
  if (!node.counts) node.counts.emplace(backend.n_qubits());
  node.counts->merge(batch);
  node.num_m += shots;

  const auto cost = static_cast<std::uint64_t>(std::llround(tree.cost(seg)));
  result.total_gate_cost += shots * cost;
  result.total_shots += shots;

  const TestOutcome outcome =
      chi_square_test(*node.counts, oracle, cfg.thresholds.sig);
  const Determination before = node.dtmn;
  const Determination after = classify(outcome, cfg.thresholds, allow_early);
  node.dtmn = after;
  node.last_outcome = outcome;

  const bool abandoned = (is_left(before) && !is_left(after)) ||
                         (is_right(before) && !is_right(after));
  if (cfg.reset_on_flip && abandoned) {
    for (int j : tree.descendants(node_index)) {
      tree.node(j).dtmn = Determination::Undetermined;
    }
  }

  result.trace.push_back({node_index, seg, shots, outcome.p_value,
                          outcome.power, after, result.total_gate_cost});
  return true;
}

inline LocateResult fail(LocateResult r, std::string reason) {
  r.status = LocateStatus::Failed;
  r.segment.reset();
  r.failure_reason = std::move(reason);
  return r;
}

}  // namespace detail

/// Runs the search on `tree` (its node state is reset first) until a segment
/// is located or a node that must be tested has used its whole budget.
inline LocateResult locate(SearchTree& tree, MeasurementBackend& backend,
                           const OracleSet& oracles, const SearchConfig& cfg,
                           Rng& rng, SearchFeatures features = {}) {
  cfg.validate();
  tree.reset_state();
  if (!cfg.whole_program_confirmed) tree.ensure_virtual_last();

  LocateResult result;
  for (;;) {
    std::optional<int> tested;
    if (features.lookback) tested = suspicious_node(tree, cfg.d_lookback);

    if (!tested) {
      const int cur = deepest_reachable(tree);
      if (!tree.node(cur).is_leaf()) {
        tested = cur;
      } else {
        const int x = tree.node(cur).lo;
        if (!features.finalization) {
          result.status = LocateStatus::Located;
          result.segment = x;
          return result;
        }
        const auto targets =
            finalization_targets(tree, cur, cfg.whole_program_confirmed);
        const bool input_ok =
            !targets.input ||
            tree.node(*targets.input).dtmn == Determination::RightFinalized;
        const bool output_ok =
            !targets.output ||
            tree.node(*targets.output).dtmn == Determination::LeftFinalized;
        if (input_ok && output_ok) {
          result.status = LocateStatus::Located;
          result.segment = x;
          return result;
        }
        if (!input_ok) {
          tested = targets.input;
        } else {
          if (tree.node(*targets.output).dtmn == Determination::RightFinalized) {
            return detail::fail(std::move(result),
                                "whole program passes its oracle");
          }
          tested = targets.output;
        }
      }
    }

    if (!detail::measure_node(tree, *tested, backend, oracles, cfg,
                              features.early, rng, result)) {
      return detail::fail(std::move(result),
                          "segment " + std::to_string(tree.node(*tested).middle) +
                              " reached the measurement limit");
    }
  }
}

}  // namespace qbl
