#pragma once

// Cost-based binary search tree over program segments.
//
// Every internal node tests the output state of its middle segment s_x. A
// detected bug sends the search left to [lo..x], otherwise right to
// [x+1..hi]. Testing s_x costs c_x gates per shot because the whole prefix
// s_1..s_x has to be executed from the initial state, so the middle element
// is chosen to minimise the expected cost of the remaining search instead of
// halving the range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbugloc/circuit.hpp"
#include "qbugloc/stat_test.hpp"

namespace qbl {

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Mean of c_from..c_to (1-based, inclusive) times log2(len) times len/total,
// or zero when the side holds at most one segment.
inline double side_cost(std::span<const double> costs, int from, int to,
                        int len, int total) {
  if (len <= 1) return 0.0;
  double sum = 0;
  for (int i = from; i <= to; ++i) sum += costs[static_cast<std::size_t>(i - 1)];
  const double mean = sum / static_cast<double>(to - from + 1);
  return mean * std::log2(static_cast<double>(len)) *
         (static_cast<double>(len) / static_cast<double>(total));
}

}  // namespace detail

/// Expected cost of searching [lo..hi] when s_x is tested first. `costs`
/// holds the global prefix costs c_1..c_l (0-based storage); lengths are
/// re-based to the target range while the costs stay global.
inline double expected_search_cost(std::span<const double> costs, int x, int lo,
                                   int hi) {
  if (lo < 1 || hi > static_cast<int>(costs.size()) || hi <= lo) {
    throw TreeError("invalid target range [" + std::to_string(lo) + ".." +
                    std::to_string(hi) + "]");
  }
  if (x < lo || x > hi - 1) {
    throw TreeError("candidate " + std::to_string(x) + " outside [" +
                    std::to_string(lo) + ".." + std::to_string(hi - 1) + "]");
  }
  const int total = hi - lo + 1;
  const int left_len = x - lo + 1;
  const int right_len = hi - x;
  // The left side never retests s_x; the right side never tests s_hi.
  const double left = detail::side_cost(costs, lo, x - 1, left_len, total);
  const double right = detail::side_cost(costs, x + 1, hi - 1, right_len, total);
  return left + right + costs[static_cast<std::size_t>(x - 1)];
}

/// argmin of expected_search_cost over x in [lo..hi-1]; smallest x on ties.
inline int select_middle(std::span<const double> costs, int lo, int hi) {
  if (hi <= lo) throw TreeError("select_middle needs hi > lo");
  int best = lo;
  double best_cost = expected_search_cost(costs, lo, lo, hi);
  for (int x = lo + 1; x <= hi - 1; ++x) {
    const double ec = expected_search_cost(costs, x, lo, hi);
    if (ec < best_cost) {
      best_cost = ec;
      best = x;
    }
  }
  return best;
}

/// Central element lo + floor((hi - lo) / 2), as in an ordinary binary search.
inline int select_central(int lo, int hi) {
  if (hi <= lo) throw TreeError("select_central needs hi > lo");
  return lo + (hi - lo) / 2;
}

enum class MiddleRule { CostBased, Central };

struct SearchNode {
  int lo = 1;
  int hi = 1;
  int middle = 0;  // tested segment; 0 on leaves
  int left = -1;
  int right = -1;
  int parent = -1;
  bool is_virtual = false;

  Determination dtmn = Determination::Undetermined;
  std::uint64_t num_m = 0;
  std::optional<CountsMap> counts;
  std::optional<TestOutcome> last_outcome;

  bool is_leaf() const { return !is_virtual && lo == hi; }
};

/// Nodes live in a flat vector; node 0 is the root covering [1..l].
class SearchTree {
 public:
  static SearchTree compose(std::span<const double> costs,
                            MiddleRule rule = MiddleRule::CostBased) {
    if (costs.size() < 2) throw TreeError("search needs at least two segments");
    SearchTree t;
    t.costs_.assign(costs.begin(), costs.end());
    SearchNode root;
    root.hi = static_cast<int>(costs.size());
    t.nodes_.push_back(std::move(root));
    t.compose_node(0, rule);
    return t;
  }

  static SearchTree compose(const SegmentedProgram& program,
                            MiddleRule rule = MiddleRule::CostBased) {
    const auto c = prefix_costs(program);
    return compose(c, rule);
  }

  int segments() const { return static_cast<int>(costs_.size()); }
  std::span<const double> costs() const { return costs_; }
  double cost(int segment) const {
    return costs_.at(static_cast<std::size_t>(segment - 1));
  }

  std::size_t node_count() const { return nodes_.size(); }
  const SearchNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  SearchNode& node(int i) { return nodes_.at(static_cast<std::size_t>(i)); }
  const SearchNode& root() const { return nodes_.front(); }
  const std::vector<SearchNode>& nodes() const { return nodes_; }

  /// Leaf indices in left-to-right order.
  std::vector<int> leaves() const {
    std::vector<int> out;
    collect_leaves(0, out);
    return out;
  }

  int leaf_for(int segment) const {
    int i = 0;
    if (segment < 1 || segment > segments()) {
      throw TreeError("segment out of range");
    }
    while (!node(i).is_leaf()) {
      i = segment <= node(i).middle ? node(i).left : node(i).right;
    }
    return i;
  }

  /// Node (internal or virtual) whose tested segment is `segment`, or -1.
  int node_testing(int segment) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].middle == segment) return static_cast<int>(i);
    }
    return -1;
  }

  /// Detached node testing s_l, used when the whole program has not been
  /// confirmed buggy before the search.
  int ensure_virtual_last() {
    if (int v = node_testing(segments()); v >= 0) return v;
    SearchNode n;
    n.lo = n.hi = n.middle = segments();
    n.is_virtual = true;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void reset_state() {
    for (auto& n : nodes_) {
      n.dtmn = Determination::Undetermined;
      n.num_m = 0;
      n.counts.reset();
      n.last_outcome.reset();
    }
  }

  std::vector<int> descendants(int i) const {
    std::vector<int> out;
    std::vector<int> stack;
    if (node(i).left >= 0) stack = {node(i).left, node(i).right};
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      out.push_back(j);
      if (node(j).left >= 0) {
        stack.push_back(node(j).left);
        stack.push_back(node(j).right);
      }
    }
    return out;
  }

  int depth() const { return depth_of(0); }

 private:
  void compose_node(int i, MiddleRule rule) {
    const int lo = nodes_[static_cast<std::size_t>(i)].lo;
    const int hi = nodes_[static_cast<std::size_t>(i)].hi;
    if (hi - lo < 1) return;
    const int x = rule == MiddleRule::CostBased ? select_middle(costs_, lo, hi)
                                                : select_central(lo, hi);
    SearchNode l;
    l.lo = lo;
    l.hi = x;
    l.parent = i;
    SearchNode r;
    r.lo = x + 1;
    r.hi = hi;
    r.parent = i;
    nodes_.push_back(std::move(l));
    const int li = static_cast<int>(nodes_.size()) - 1;
    nodes_.push_back(std::move(r));
    const int ri = li + 1;
    auto& cur = nodes_[static_cast<std::size_t>(i)];
    cur.middle = x;
    cur.left = li;
    cur.right = ri;
    compose_node(li, rule);
    compose_node(ri, rule);
  }

  void collect_leaves(int i, std::vector<int>& out) const {
    if (node(i).is_leaf()) {
      out.push_back(i);
      return;
    }
    collect_leaves(node(i).left, out);
    collect_leaves(node(i).right, out);
  }

  int depth_of(int i) const {
    if (node(i).is_leaf()) return 0;
    return 1 + std::max(depth_of(node(i).left), depth_of(node(i).right));
  }

  std::vector<double> costs_;
  std::vector<SearchNode> nodes_;
};

}  // namespace qbl
