#pragma once

// Segmented quantum programs and an exact statevector simulator.

#include <algorithm>
#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qbl {

using Complex = std::complex<double>;
using Rng = std::mt19937_64;

inline constexpr int kMaxQubits = 16;
inline constexpr double kNormTolerance = 1e-10;

class CircuitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GateKind { H, X, Y, Z, S, T, SX, RX, RY, RZ, CX, CZ, SWAP };

inline constexpr std::array<GateKind, 13> kAllGateKinds = {
    GateKind::H,  GateKind::X,  GateKind::Y,  GateKind::Z,  GateKind::S,
    GateKind::T,  GateKind::SX, GateKind::RX, GateKind::RY, GateKind::RZ,
    GateKind::CX, GateKind::CZ, GateKind::SWAP};

inline std::string_view to_string(GateKind k) {
  switch (k) {
    case GateKind::H: return "H";
    case GateKind::X: return "X";
    case GateKind::Y: return "Y";
    case GateKind::Z: return "Z";
    case GateKind::S: return "S";
    case GateKind::T: return "T";
    case GateKind::SX: return "SX";
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::CX: return "CX";
    case GateKind::CZ: return "CZ";
    case GateKind::SWAP: return "SWAP";
  }
  return "?";
}

inline GateKind gate_kind_from_string(std::string_view name) {
  for (GateKind k : kAllGateKinds) {
    if (to_string(k) == name) return k;
  }
  throw CircuitError("unknown gate kind '" + std::string(name) + "'");
}

inline int arity(GateKind k) {
  return (k == GateKind::CX || k == GateKind::CZ || k == GateKind::SWAP) ? 2 : 1;
}

inline int param_count(GateKind k) {
  return (k == GateKind::RX || k == GateKind::RY || k == GateKind::RZ) ? 1 : 0;
}

// For CX the first target is the control.
struct Gate {
  GateKind kind = GateKind::H;
  std::vector<double> params;
  std::vector<int> targets;

  friend bool operator==(const Gate&, const Gate&) = default;
};

inline Gate make_gate(GateKind kind, std::vector<int> targets,
                      std::vector<double> params = {}) {
  return Gate{kind, std::move(params), std::move(targets)};
}

inline void validate_gate(const Gate& g, int n_qubits) {
  if (static_cast<int>(g.targets.size()) != arity(g.kind)) {
    throw CircuitError("gate " + std::string(to_string(g.kind)) +
                       " expects " + std::to_string(arity(g.kind)) +
                       " target(s)");
  }
  if (static_cast<int>(g.params.size()) != param_count(g.kind)) {
    throw CircuitError("gate " + std::string(to_string(g.kind)) +
                       " expects " + std::to_string(param_count(g.kind)) +
                       " parameter(s)");
  }
  for (int t : g.targets) {
    if (t < 0 || t >= n_qubits) {
      throw CircuitError("gate target " + std::to_string(t) +
                         " out of range for " + std::to_string(n_qubits) +
                         " qubit(s)");
    }
  }
  if (g.targets.size() == 2 && g.targets[0] == g.targets[1]) {
    throw CircuitError("two-qubit gate targets must be distinct");
  }
}

struct Segment {
  std::vector<Gate> gates;

  std::size_t gate_count() const { return gates.size(); }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Ordered segments over a fixed qubit register. Segment indices are 1-based
/// in every public API (s_1..s_l); index 0 denotes the empty prefix.
class SegmentedProgram {
 public:
  SegmentedProgram(int n_qubits, std::vector<Segment> segments)
      : n_qubits_(n_qubits), segments_(std::move(segments)) {
    if (n_qubits_ < 1) throw CircuitError("program needs at least one qubit");
    if (n_qubits_ > kMaxQubits) {
      throw CircuitError("programs are limited to " +
                         std::to_string(kMaxQubits) + " qubits, got " +
                         std::to_string(n_qubits_));
    }
    if (segments_.size() < 2) {
      throw CircuitError("program needs at least two segments");
    }
    for (const auto& seg : segments_) {
      if (seg.gates.empty()) throw CircuitError("empty segment");
      for (const auto& g : seg.gates) validate_gate(g, n_qubits_);
    }
  }

  int n_qubits() const { return n_qubits_; }
  int size() const { return static_cast<int>(segments_.size()); }
  const std::vector<Segment>& segments() const { return segments_; }

  const Segment& segment(int index) const {
    if (index < 1 || index > size()) {
      throw CircuitError("segment index " + std::to_string(index) +
                         " out of range 1.." + std::to_string(size()));
    }
    return segments_[static_cast<std::size_t>(index - 1)];
  }

  Segment& mutable_segment(int index) {
    return const_cast<Segment&>(std::as_const(*this).segment(index));
  }

  std::vector<std::size_t> gate_counts() const {
    std::vector<std::size_t> g;
    g.reserve(segments_.size());
    for (const auto& s : segments_) g.push_back(s.gate_count());
    return g;
  }

  friend bool operator==(const SegmentedProgram&,
                         const SegmentedProgram&) = default;

 private:
  int n_qubits_;
  std::vector<Segment> segments_;
};

// c_x = g_1 + ... + g_x
inline std::uint64_t prefix_cost(const SegmentedProgram& p, int x) {
  if (x < 1 || x > p.size()) {
    throw CircuitError("prefix index " + std::to_string(x) +
                       " out of range 1.." + std::to_string(p.size()));
  }
  std::uint64_t c = 0;
  for (int i = 1; i <= x; ++i) c += p.segment(i).gate_count();
  return c;
}

/// All prefix costs c_1..c_l, stored 0-based.
inline std::vector<double> prefix_costs(const SegmentedProgram& p) {
  std::vector<double> c;
  c.reserve(static_cast<std::size_t>(p.size()));
  double acc = 0;
  for (const auto& s : p.segments()) {
    acc += static_cast<double>(s.gate_count());
    c.push_back(acc);
  }
  return c;
}

/// Basis state amplitudes with qubit 0 as the least-significant bit.
class Statevector {
 public:
  explicit Statevector(int n_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits) {
      throw CircuitError("statevector qubit count must be in 1.." +
                         std::to_string(kMaxQubits));
    }
    amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
    amps_[0] = 1.0;
  }

  Statevector(int n_qubits, std::vector<Complex> amps)
      : n_qubits_(n_qubits), amps_(std::move(amps)) {
    if (amps_.size() != (std::size_t{1} << n_qubits)) {
      throw CircuitError("amplitude vector has wrong dimension");
    }
  }

  int n_qubits() const { return n_qubits_; }
  std::size_t dim() const { return amps_.size(); }
  std::span<const Complex> amplitudes() const { return amps_; }
  std::span<Complex> amplitudes() { return amps_; }
  const Complex& operator[](std::size_t i) const { return amps_[i]; }

  double norm_squared() const {
    double s = 0;
    for (const auto& a : amps_) s += std::norm(a);
    return s;
  }

  std::vector<double> probabilities() const {
    std::vector<double> p(amps_.size());
    std::transform(amps_.begin(), amps_.end(), p.begin(),
                   [](const Complex& a) { return std::norm(a); });
    return p;
  }

 private:
  int n_qubits_;
  std::vector<Complex> amps_;
};

namespace detail {

using Mat2 = std::array<Complex, 4>;  // row-major [[a, b], [c, d]]

inline Mat2 single_qubit_matrix(const Gate& g) {
  constexpr double r2 = 0.70710678118654752440;
  const Complex i{0.0, 1.0};
  switch (g.kind) {
    case GateKind::H: return {r2, r2, r2, -r2};
    case GateKind::X: return {0.0, 1.0, 1.0, 0.0};
    case GateKind::Y: return {0.0, -i, i, 0.0};
    case GateKind::Z: return {1.0, 0.0, 0.0, -1.0};
    case GateKind::S: return {1.0, 0.0, 0.0, i};
    case GateKind::T: return {1.0, 0.0, 0.0, std::polar(1.0, std::numbers::pi / 4)};
    case GateKind::SX:
      return {Complex{0.5, 0.5}, Complex{0.5, -0.5}, Complex{0.5, -0.5},
              Complex{0.5, 0.5}};
    case GateKind::RX: {
      double c = std::cos(g.params[0] / 2), s = std::sin(g.params[0] / 2);
      return {c, -i * s, -i * s, c};
    }
    case GateKind::RY: {
      double c = std::cos(g.params[0] / 2), s = std::sin(g.params[0] / 2);
      return {c, -s, s, c};
    }
    case GateKind::RZ:
      return {std::polar(1.0, -g.params[0] / 2), 0.0, 0.0,
              std::polar(1.0, g.params[0] / 2)};
    default: break;
  }
  throw CircuitError("not a single-qubit gate");
}

}  // namespace detail

inline void apply_gate(Statevector& state, const Gate& g) {
  validate_gate(g, state.n_qubits());
  auto amps = state.amplitudes();
  const std::size_t dim = amps.size();

  if (arity(g.kind) == 1) {
    const auto m = detail::single_qubit_matrix(g);
    const std::size_t bit = std::size_t{1} << g.targets[0];
    for (std::size_t i = 0; i < dim; ++i) {
      if (i & bit) continue;
      const Complex a0 = amps[i], a1 = amps[i | bit];
      amps[i] = m[0] * a0 + m[1] * a1;
      amps[i | bit] = m[2] * a0 + m[3] * a1;
    }
    return;
  }

  const std::size_t b0 = std::size_t{1} << g.targets[0];
  const std::size_t b1 = std::size_t{1} << g.targets[1];
  switch (g.kind) {
    case GateKind::CX:
      for (std::size_t i = 0; i < dim; ++i) {
        if ((i & b0) && !(i & b1)) std::swap(amps[i], amps[i | b1]);
      }
      break;
    case GateKind::CZ:
      for (std::size_t i = 0; i < dim; ++i) {
        if ((i & b0) && (i & b1)) amps[i] = -amps[i];
      }
      break;
    case GateKind::SWAP:
      for (std::size_t i = 0; i < dim; ++i) {
        if ((i & b0) && !(i & b1)) std::swap(amps[i], amps[(i ^ b0) | b1]);
      }
      break;
    default:
      throw CircuitError("not a two-qubit gate");
  }
}

inline void apply_segment(Statevector& state, const Segment& seg) {
  for (const auto& g : seg.gates) apply_gate(state, g);
}

/// Gate sequence implementing the exact inverse of `g` (no global phase).
inline std::vector<Gate> inverse(const Gate& g) {
  switch (g.kind) {
    case GateKind::S: return {g, g, g};
    case GateKind::SX: return {g, g, g};
    case GateKind::T: return std::vector<Gate>(7, g);
    case GateKind::RX:
    case GateKind::RY:
    case GateKind::RZ: return {make_gate(g.kind, g.targets, {-g.params[0]})};
    default: return {g};
  }
}

/// State after executing s_1..s_k on |0...0>.
inline Statevector run_prefix(const SegmentedProgram& p, int k) {
  if (k < 0 || k > p.size()) {
    throw CircuitError("prefix length " + std::to_string(k) +
                       " out of range 0.." + std::to_string(p.size()));
  }
  Statevector sv(p.n_qubits());
  for (int i = 1; i <= k; ++i) apply_segment(sv, p.segment(i));
  return sv;
}

/// States after every prefix; element k holds run_prefix(p, k).
inline std::vector<Statevector> all_prefix_states(const SegmentedProgram& p) {
  std::vector<Statevector> out;
  out.reserve(static_cast<std::size_t>(p.size()) + 1);
  out.emplace_back(p.n_qubits());
  for (int i = 1; i <= p.size(); ++i) {
    Statevector next = out.back();
    apply_segment(next, p.segment(i));
    out.push_back(std::move(next));
  }
  return out;
}

/// n-character bitstring for a basis index, qubit n-1 leftmost.
inline std::string bitstring(std::uint64_t index, int n_qubits) {
  std::string s(static_cast<std::size_t>(n_qubits), '0');
  for (int q = 0; q < n_qubits; ++q) {
    if (index >> q & 1U) s[static_cast<std::size_t>(n_qubits - 1 - q)] = '1';
  }
  return s;
}

inline std::uint64_t basis_index(std::string_view bits) {
  if (bits.empty() || bits.size() > static_cast<std::size_t>(kMaxQubits)) {
    throw CircuitError("invalid bitstring length");
  }
  std::uint64_t idx = 0;
  for (char c : bits) {
    if (c != '0' && c != '1') {
      throw CircuitError("invalid bitstring '" + std::string(bits) + "'");
    }
    idx = idx << 1 | static_cast<std::uint64_t>(c == '1');
  }
  return idx;
}

/// Observed Z-basis outcomes keyed by basis index.
class CountsMap {
 public:
  explicit CountsMap(int n_qubits) : n_qubits_(n_qubits) {}

  int n_qubits() const { return n_qubits_; }
  std::uint64_t total_shots() const { return total_; }
  const std::map<std::uint64_t, std::uint64_t>& counts() const { return counts_; }

  std::uint64_t operator[](std::uint64_t basis) const {
    auto it = counts_.find(basis);
    return it == counts_.end() ? 0 : it->second;
  }

  void add(std::uint64_t basis, std::uint64_t n) {
    if (basis >= (std::uint64_t{1} << n_qubits_)) {
      throw CircuitError("basis index out of range");
    }
    if (n == 0) return;
    counts_[basis] += n;
    total_ += n;
  }

  void merge(const CountsMap& other) {
    for (const auto& [b, n] : other.counts_) add(b, n);
  }

  std::map<std::string, std::uint64_t> by_bitstring() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& [b, n] : counts_) out[bitstring(b, n_qubits_)] = n;
    return out;
  }

  friend bool operator==(const CountsMap&, const CountsMap&) = default;

 private:
  int n_qubits_;
  std::map<std::uint64_t, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF sampler over a fixed probability vector.
class BasisSampler {
 public:
  /// `probs` has one entry per basis state (length 2^n).
  explicit BasisSampler(const std::vector<double>& probs)
      : cdf_(probs.size()), n_qubits_(std::countr_zero(probs.size())) {
    if (probs.empty() || !std::has_single_bit(probs.size())) {
      throw CircuitError("probability vector length must be a power of two");
    }
    std::partial_sum(probs.begin(), probs.end(), cdf_.begin());
  }

  explicit BasisSampler(const Statevector& state)
      : BasisSampler(state.probabilities()) {}

  std::uint64_t draw(Rng& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) {
      // u rounded up to the total; take the last basis with nonzero mass.
      it = std::lower_bound(cdf_.begin(), cdf_.end(), cdf_.back());
    }
    return static_cast<std::uint64_t>(it - cdf_.begin());
  }

  CountsMap sample(std::uint64_t shots, Rng& rng) const {
    CountsMap counts(n_qubits_);
    for (std::uint64_t s = 0; s < shots; ++s) counts.add(draw(rng), 1);
    return counts;
  }

 private:
  std::vector<double> cdf_;
  int n_qubits_;
};

inline CountsMap sample_counts(const Statevector& state, std::uint64_t shots,
                               Rng& rng) {
  if (shots == 0) throw CircuitError("shots must be at least 1");
  return BasisSampler(state).sample(shots, rng);
}

}  // namespace qbl
