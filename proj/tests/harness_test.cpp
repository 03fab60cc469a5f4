#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "qbugloc/harness.hpp"
#include "qbugloc/io.hpp"

namespace qbl {
namespace {

const std::vector<GateKind> kPermutationKinds{GateKind::X, GateKind::CX, GateKind::SWAP};

int differing_gates(const SegmentedProgram& a, const SegmentedProgram& b) {
  int n = 0;
  for (int s = 1; s <= a.size(); ++s) {
    const auto& ga = a.segment(s).gates;
    const auto& gb = b.segment(s).gates;
    EXPECT_EQ(ga.size(), gb.size());
    for (std::size_t i = 0; i < ga.size(); ++i) n += !(ga[i] == gb[i]);
  }
  return n;
}

bool same_trace(const LocateResult& a, const LocateResult& b) {
  if (a.trace.size() != b.trace.size()) return false;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    const auto& x = a.trace[i];
    const auto& y = b.trace[i];
    if (x.segment != y.segment || x.shots != y.shots || x.p_value != y.p_value ||
        x.dtmn != y.dtmn || x.cumulative_cost != y.cumulative_cost) {
      return false;
    }
  }
  return a.segment == b.segment && a.status == b.status;
}

// Program whose bug changes the prefix state at `segment` (and, since only
// permutation gates are used, every later prefix too).
std::pair<SegmentedProgram, SegmentedProgram> permutation_case(int l, int segment,
                                                               Rng& rng) {
  for (;;) {
    const auto ref = generate_program(GenSpec{3, l, 2 * l, 0, kPermutationKinds}, rng);
    const auto pos = static_cast<int>(uniform_index(rng, ref.segment(segment).gate_count()));
    auto [bug, inj] = inject_bug_at(ref, segment, pos, rng, kPermutationKinds);
    if (run_prefix(ref, segment).probabilities() != run_prefix(bug, segment).probabilities()) {
      return {ref, bug};
    }
  }
}

TEST(DeriveSeed, DistinctStreams) {
  EXPECT_EQ(derive_seed(1, 0, 0), derive_seed(1, 0, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
}

TEST(UniformIndex, StaysInRange) {
  Rng rng(3);
  std::vector<int> hits(7);
  for (int i = 0; i < 7000; ++i) ++hits[uniform_index(rng, 7)];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(Generate, DeterministicPerSeed) {
  GenSpec spec{2, 3, 9, 7, {}};
  Rng a(spec.seed), b(spec.seed);
  EXPECT_EQ(generate_program(spec, a), generate_program(spec, b));
}

TEST(Generate, CompositionContract) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int l = 2 + static_cast<int>(rng() % 12);
    const int gates = l + static_cast<int>(rng() % 40);
    const int n = 1 + static_cast<int>(rng() % 4);
    const auto p = generate_program(GenSpec{n, l, gates, 0, {}}, rng);
    const auto g = p.gate_counts();
    EXPECT_EQ(p.size(), l);
    EXPECT_EQ(p.n_qubits(), n);
    EXPECT_EQ(std::accumulate(g.begin(), g.end(), std::size_t{0}),
              static_cast<std::size_t>(gates));
    for (auto gi : g) EXPECT_GE(gi, 1u);
    for (const auto& s : p.segments()) {
      for (const auto& gate : s.gates) {
        if (param_count(gate.kind)) {
          EXPECT_GE(gate.params[0], 0.0);
          EXPECT_LT(gate.params[0], 2 * std::numbers::pi);
        }
        if (n == 1) {
          EXPECT_EQ(arity(gate.kind), 1);
        }
      }
    }
  }
}

TEST(Generate, ForcedComposition) {
  Rng rng(0);
  const auto p = generate_program(GenSpec{2, 6, 6, 0, {}}, rng);
  for (auto gi : p.gate_counts()) EXPECT_EQ(gi, 1u);
}

TEST(Generate, RestrictedKinds) {
  Rng rng(0);
  const auto p = generate_program(GenSpec{3, 5, 40, 0, kPermutationKinds}, rng);
  for (const auto& s : p.segments()) {
    for (const auto& g : s.gates) {
      EXPECT_TRUE(g.kind == GateKind::X || g.kind == GateKind::CX || g.kind == GateKind::SWAP);
    }
  }
}

TEST(Generate, InfeasibleSpecs) {
  Rng rng(0);
  EXPECT_THROW(generate_program(GenSpec{2, 1, 5, 0, {}}, rng), HarnessError);
  EXPECT_THROW(generate_program(GenSpec{2, 5, 4, 0, {}}, rng), HarnessError);
  EXPECT_THROW(generate_program(GenSpec{0, 5, 9, 0, {}}, rng), HarnessError);
  EXPECT_THROW(generate_program(GenSpec{17, 5, 9, 0, {}}, rng), HarnessError);
}

TEST(Inject, ExactlyOneGateDiffers) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ref = generate_program(GenSpec{3, 5, 20, 0, {}}, rng);
    const auto copy = ref;
    const auto [bug, inj] = inject_bug(ref, rng);
    EXPECT_EQ(ref, copy);
    EXPECT_EQ(differing_gates(ref, bug), 1);
    EXPECT_FALSE(inj.original == inj.replacement);
    EXPECT_EQ(arity(inj.original.kind), arity(inj.replacement.kind));
    EXPECT_EQ(ref.segment(inj.segment).gates[static_cast<std::size_t>(inj.gate_position)],
              inj.original);
    EXPECT_EQ(bug.segment(inj.segment).gates[static_cast<std::size_t>(inj.gate_position)],
              inj.replacement);
    EXPECT_EQ(prefix_costs(ref), prefix_costs(bug));
  }
}

TEST(Inject, Reproducible) {
  Rng gen(1);
  const auto ref = generate_program(GenSpec{2, 4, 12, 0, {}}, gen);
  Rng a(9), b(9);
  const auto ia = inject_bug(ref, a).second;
  const auto ib = inject_bug(ref, b).second;
  EXPECT_EQ(ia.segment, ib.segment);
  EXPECT_EQ(ia.gate_position, ib.gate_position);
  EXPECT_EQ(ia.replacement, ib.replacement);
}

TEST(Inject, MultipleBugsInDistinctSegments) {
  Rng rng(5);
  const auto ref = generate_program(GenSpec{2, 8, 24, 0, {}}, rng);
  const auto [bug, injections] = inject_bugs(ref, 3, rng);
  ASSERT_EQ(injections.size(), 3u);
  EXPECT_LT(injections[0].segment, injections[1].segment);
  EXPECT_LT(injections[1].segment, injections[2].segment);
  EXPECT_EQ(differing_gates(ref, bug), 3);
  EXPECT_THROW(inject_bugs(ref, 9, rng), HarnessError);
}

TEST(Filter, IdenticalProgramsExcluded) {
  Rng rng(2);
  const auto p = generate_program(GenSpec{2, 4, 12, 0, {}}, rng);
  EXPECT_EQ(output_difference(p, p), 0.0);
  EXPECT_FALSE(detectability_filter(p, p));
}

TEST(Filter, BitFlipIsMaximal) {
  SegmentedProgram ref(1, {Segment{{make_gate(GateKind::Z, {0})}},
                           Segment{{make_gate(GateKind::Z, {0})}}});
  SegmentedProgram bug(1, {Segment{{make_gate(GateKind::X, {0})}},
                           Segment{{make_gate(GateKind::Z, {0})}}});
  EXPECT_NEAR(output_difference(ref, bug), 2.0, 1e-15);
  EXPECT_TRUE(detectability_filter(ref, bug));
}

TEST(Filter, PhaseOnlyBugIsInvisible) {
  SegmentedProgram ref(1, {Segment{{make_gate(GateKind::H, {0})}},
                           Segment{{make_gate(GateKind::S, {0})}}});
  SegmentedProgram bug(1, {Segment{{make_gate(GateKind::H, {0})}},
                           Segment{{make_gate(GateKind::Z, {0})}}});
  EXPECT_NEAR(output_difference(ref, bug), 0.0, 1e-15);
  EXPECT_FALSE(detectability_filter(ref, bug));
}

TEST(Filter, ShapeMismatch) {
  SegmentedProgram a(1, {Segment{{make_gate(GateKind::H, {0})}}, Segment{{make_gate(GateKind::H, {0})}}});
  SegmentedProgram b(2, {Segment{{make_gate(GateKind::H, {0})}}, Segment{{make_gate(GateKind::H, {0})}}});
  EXPECT_THROW(output_difference(a, b), HarnessError);
}

TEST(Linear, FirstSegmentNeedsOneTest) {
  Rng gen(1);
  auto [ref, bug] = permutation_case(6, 1, gen);
  ExactCountsBackend backend(bug);
  Rng rng(0);
  const auto r = linear_locate(prefix_costs(ref), backend, reference_oracles(ref),
                               SearchConfig{}, rng);
  ASSERT_TRUE(r.located());
  EXPECT_EQ(*r.segment, 1);
  for (const auto& t : r.trace) EXPECT_EQ(t.segment, 1);
}

TEST(Linear, LastSegmentByConvention) {
  Rng gen(2);
  auto [ref, bug] = permutation_case(6, 6, gen);
  ExactCountsBackend backend(bug);
  Rng rng(0);
  const auto r = linear_locate(prefix_costs(ref), backend, reference_oracles(ref),
                               SearchConfig{}, rng);
  ASSERT_TRUE(r.located());
  EXPECT_EQ(*r.segment, 6);
  std::set<int> tested;
  for (const auto& t : r.trace) tested.insert(t.segment);
  EXPECT_EQ(tested, (std::set<int>{1, 2, 3, 4, 5}));
}

TEST(Linear, CostGrowsWithBugIndex) {
  // Equal segment sizes; a deterministic prefix lets every test finalize in
  // one batch.
  std::vector<Segment> segs(6, Segment{{make_gate(GateKind::X, {0}), make_gate(GateKind::X, {0})}});
  const SegmentedProgram ref(1, segs);
  std::uint64_t prev = 0;
  for (int j = 1; j <= 5; ++j) {
    auto b = segs;
    b[static_cast<std::size_t>(j - 1)].gates[0] = make_gate(GateKind::Z, {0});
    const SegmentedProgram bug(1, b);
    ExactCountsBackend backend(bug);
    Rng rng(0);
    const auto r = linear_locate(prefix_costs(ref), backend, reference_oracles(ref),
                                 SearchConfig{}, rng);
    ASSERT_TRUE(r.located());
    EXPECT_EQ(*r.segment, j);
    std::uint64_t expected = 0;
    for (int x = 1; x <= j; ++x) expected += 100 * 2 * static_cast<std::uint64_t>(x);
    EXPECT_EQ(r.total_gate_cost, expected);
    EXPECT_GT(r.total_gate_cost, prev);
    prev = r.total_gate_cost;
  }
}

TEST(Binary, CentralRoot) {
  Rng gen(3);
  auto [ref, bug] = permutation_case(4, 3, gen);
  ExactCountsBackend backend(bug);
  Rng rng(0);
  const auto r = naive_binary_locate(prefix_costs(ref), backend, reference_oracles(ref),
                                     SearchConfig{}, rng);
  ASSERT_FALSE(r.trace.empty());
  EXPECT_EQ(r.trace.front().segment, 2);
  EXPECT_EQ(*r.segment, 3);
}

TEST(PerfectEvidence, AllMethodsLocateEverySegment) {
  Rng gen(12);
  for (int l = 2; l <= 8; ++l) {
    for (int j = 1; j <= l; ++j) {
      auto [ref, bug] = permutation_case(l, j, gen);
      const auto oracles = reference_oracles(ref);
      const auto costs = prefix_costs(ref);
      for (Method m : {Method::Proposed, Method::Linear, Method::Binary}) {
        ExactCountsBackend backend(bug);
        Rng rng(0);
        const auto r = run_method(m, costs, backend, oracles, SearchConfig{}, rng);
        ASSERT_TRUE(r.located()) << to_string(m) << " l=" << l << " j=" << j;
        EXPECT_EQ(*r.segment, j) << to_string(m) << " l=" << l;
      }
    }
  }
}

TEST(Binary, Deterministic) {
  Rng gen(6);
  const auto ref = generate_program(GenSpec{2, 8, 24, 0, {}}, gen);
  const auto bug = inject_bug(ref, gen).first;
  const auto oracles = reference_oracles(ref);
  Rng a(5), b(5);
  EXPECT_TRUE(same_trace(naive_binary_locate(bug, oracles, SearchConfig{}, a),
                         naive_binary_locate(bug, oracles, SearchConfig{}, b)));
}

TEST(Baselines, TwoSegmentEquivalence) {
  // With two segments both trees test s_1 at the root, looking back needs a
  // longer path and finalization only re-checks the root, so the proposed
  // search without early determination reduces to the central binary search.
  Rng gen(8);
  for (int trial = 0; trial < 40; ++trial) {
    const auto ref = generate_program(GenSpec{2, 2, 6, 0, {}}, gen);
    const auto bug = inject_bug(ref, gen).first;
    const auto oracles = reference_oracles(ref);
    Ablations abl;
    abl.no_early = true;
    Rng a(trial), b(trial);
    const auto p = proposed_locate(bug, oracles, SearchConfig{}, a, abl);
    const auto n = naive_binary_locate(bug, oracles, SearchConfig{}, b);
    EXPECT_TRUE(same_trace(p, n)) << "trial " << trial;
  }
}

TEST(Ablations, IsolatedWhenFeatureNeverTriggers) {
  // Perfect evidence finalizes every test in one batch: early states never
  // occur, no suspect is ever unfinalized and finalization targets are
  // already settled, so disabling those features must not change the trace.
  Rng gen(13);
  for (int l = 2; l <= 8; ++l) {
    for (int j = 1; j <= l; ++j) {
      auto [ref, bug] = permutation_case(l, j, gen);
      const auto oracles = reference_oracles(ref);
      const auto costs = prefix_costs(ref);
      auto run = [&](const Ablations& a) {
        ExactCountsBackend backend(bug);
        Rng rng(0);
        return proposed_locate(costs, backend, oracles, SearchConfig{}, rng, a);
      };
      const auto base = run({});
      EXPECT_TRUE(same_trace(base, run({.no_early = true})));
      EXPECT_TRUE(same_trace(base, run({.no_finalization = true})));
      EXPECT_TRUE(same_trace(base, run({.no_lookback = true})));
    }
  }
}

TEST(Ablations, NoEarlyIdenticalWhenNoEarlyStateSeen) {
  Rng gen(14);
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto ref = generate_program(GenSpec{2, 6, 18, 0, {}}, gen);
    const auto bug = inject_bug(ref, gen).first;
    const auto oracles = reference_oracles(ref);
    Rng a(trial), b(trial);
    const auto base = proposed_locate(bug, oracles, SearchConfig{}, a);
    bool early_seen = false;
    for (const auto& t : base.trace) {
      early_seen |= t.dtmn == Determination::LeftEarly || t.dtmn == Determination::RightEarly;
    }
    if (early_seen) continue;
    ++compared;
    EXPECT_TRUE(same_trace(base, proposed_locate(bug, oracles, SearchConfig{}, b,
                                                 {.no_early = true})));
  }
  EXPECT_GT(compared, 0);
}

TEST(MultiBug, ForwardBugFirst) {
  SegmentedProgram ref(3, {Segment{{make_gate(GateKind::X, {0})}},
                           Segment{{make_gate(GateKind::X, {1})}},
                           Segment{{make_gate(GateKind::SWAP, {0, 2})}},
                           Segment{{make_gate(GateKind::CX, {1, 2})}},
                           Segment{{make_gate(GateKind::X, {2})}},
                           Segment{{make_gate(GateKind::X, {0})}}});
  auto segs = ref.segments();
  segs[1].gates[0] = make_gate(GateKind::X, {2});
  segs[4].gates[0] = make_gate(GateKind::X, {1});
  const SegmentedProgram bug(3, segs);
  const std::vector<BugInjection> injections{
      {2, 0, ref.segment(2).gates[0], segs[1].gates[0]},
      {5, 0, ref.segment(5).gates[0], segs[4].gates[0]}};
  Rng rng(0);
  const auto r = iterative_multibug_locate(ref, bug, injections, reference_oracles(ref),
                                           SearchConfig{}, rng, Method::Proposed, {},
                                           BackendKind::Exact);
  EXPECT_EQ(r.status, LocateStatus::Located);
  EXPECT_TRUE(r.all_found);
  EXPECT_EQ(r.located, (std::vector<int>{2, 5}));
}

TEST(MultiBug, CleanAfterSingleFix) {
  Rng gen(4);
  auto [ref, bug] = permutation_case(5, 3, gen);
  const std::vector<BugInjection> inj{{3, 0, {}, {}}};
  Rng rng(0);
  const auto r = iterative_multibug_locate(ref, bug, inj, reference_oracles(ref),
                                           SearchConfig{}, rng, Method::Linear, {},
                                           BackendKind::Exact);
  EXPECT_EQ(r.status, LocateStatus::Located);
  EXPECT_EQ(r.located, std::vector<int>{3});
  EXPECT_TRUE(r.all_found);
}

TEST(MultiBug, FailurePropagates) {
  SegmentedProgram ref(1, {Segment{{make_gate(GateKind::RX, {0}, {1.0})}},
                           Segment{{make_gate(GateKind::RZ, {0}, {0.3})}}});
  SegmentedProgram bug(1, {Segment{{make_gate(GateKind::RX, {0}, {1.05})}},
                           Segment{{make_gate(GateKind::RZ, {0}, {0.3})}}});
  SearchConfig cfg;
  cfg.m_max = 1000;
  Rng rng(0);
  const auto r = iterative_multibug_locate(ref, bug, {{1, 0, {}, {}}}, reference_oracles(ref),
                                           cfg, rng, Method::Proposed, {}, BackendKind::Exact);
  EXPECT_EQ(r.status, LocateStatus::Failed);
  EXPECT_TRUE(r.located.empty());
  EXPECT_FALSE(r.all_found);
  EXPECT_FALSE(r.failure_reason.empty());
}

TEST(ReturnProbability, Examples) {
  EXPECT_EQ(return_probability(0.05, 0.2, 1, 3, 5, 10), 0.3125);
  EXPECT_NEAR(return_probability(0.05, 0.2, 2, 3, 5, 10), 0.01953125, 1e-15);
  EXPECT_LT(return_probability(0.05, 0.2, 8, 8, 5, 10), 1e-8);
  EXPECT_EQ(return_probability(0.5, 0.6, 1, 1, 1, 10), 1.0);  // clamped
}

TEST(ReturnProbability, DomainChecks) {
  EXPECT_THROW(return_probability(0.0, 0.2, 1, 1, 1, 2), HarnessError);
  EXPECT_THROW(return_probability(0.05, 1.0, 1, 1, 1, 2), HarnessError);
  EXPECT_THROW(return_probability(0.05, 0.2, 0, 1, 1, 2), HarnessError);
  EXPECT_THROW(return_probability(0.05, 0.2, 2, 1, 1, 2), HarnessError);
  EXPECT_THROW(return_probability(0.05, 0.2, 1, 1, 2, 2), HarnessError);
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.gen = GenSpec{2, 5, 15, 99, {}};
  cfg.corpus_size = 12;
  cfg.search.m_max = 5000;
  cfg.threads = 1;
  return cfg;
}

TEST(Experiment, ByteIdenticalReruns) {
  const auto cfg = small_config();
  const auto a = io::dump(io::to_json(run_experiment(cfg)));
  const auto b = io::dump(io::to_json(run_experiment(cfg)));
  EXPECT_EQ(a, b);
}

TEST(Experiment, IndependentOfThreadCount) {
  auto cfg = small_config();
  const auto one = io::dump(io::to_json(run_experiment(cfg)));
  cfg.threads = 4;
  EXPECT_EQ(one, io::dump(io::to_json(run_experiment(cfg))));
}

TEST(Experiment, MetricIdentities) {
  const auto rep = run_experiment(small_config());
  ASSERT_EQ(rep.methods.size(), 3u);
  ASSERT_EQ(rep.corpus_seeds.size(), 12u);
  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    const auto& s = rep.methods[m];
    const auto& runs = rep.runs[m];
    std::size_t ok = 0;
    double cost_ok = 0, cost_bad = 0;
    for (const auto& r : runs) {
      ok += r.success;
      (r.success ? cost_ok : cost_bad) += static_cast<double>(r.cost);
    }
    EXPECT_EQ(s.runs, runs.size());
    EXPECT_EQ(s.failures + ok, s.runs);
    EXPECT_DOUBLE_EQ(s.success_probability, static_cast<double>(ok) / static_cast<double>(s.runs));
    if (ok > 0) {
      EXPECT_DOUBLE_EQ(*s.avg_cost_success, cost_ok / static_cast<double>(ok));
    }
    if (ok > 0 && s.failures > 0) {
      const double bad = cost_bad / static_cast<double>(s.failures);
      EXPECT_GE(s.avg_cost_all, std::min(*s.avg_cost_success, bad) - 1e-9);
      EXPECT_LE(s.avg_cost_all, std::max(*s.avg_cost_success, bad) + 1e-9);
    }
  }
}

TEST(Experiment, PerfectEvidenceSucceedsEverywhere) {
  ExperimentConfig cfg;
  cfg.gen = GenSpec{3, 6, 18, 5, kPermutationKinds};
  cfg.corpus_size = 30;
  cfg.backend = BackendKind::Exact;
  cfg.threads = 1;
  const auto rep = run_experiment(cfg);
  for (const auto& s : rep.methods) EXPECT_EQ(s.success_probability, 1.0) << to_string(s.method);
}

TEST(Experiment, CorpusPassesFilter) {
  const auto cfg = small_config();
  for (const auto& e : generate_corpus(cfg)) {
    EXPECT_GT(e.output_difference, cfg.filter_threshold);
    EXPECT_EQ(e.injections.size(), 1u);
  }
}

TEST(Experiment, CorpusReproducibleFromSeed) {
  const auto cfg = small_config();
  const auto corpus = generate_corpus(cfg);
  for (const auto& e : corpus) {
    Rng rng(e.seed);
    const auto ref = generate_program(cfg.gen, rng);
    EXPECT_EQ(ref, e.reference);
    EXPECT_EQ(inject_bugs(ref, 1, rng).first, e.buggy);
  }
}

TEST(Experiment, StarvationIsReported) {
  auto cfg = small_config();
  cfg.filter_threshold = 10.0;  // no difference exceeds 2
  cfg.max_attempts_per_program = 3;
  EXPECT_THROW(run_experiment(cfg), HarnessError);
}

TEST(Experiment, UnfilteredCorpusKeepsEverything) {
  auto cfg = small_config();
  cfg.filter = false;
  const auto corpus = generate_corpus(cfg);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(corpus[i].seed, derive_seed(cfg.gen.seed, 0, i));
  }
}

TEST(Experiment, MultiBugAndLimitedOracles) {
  auto cfg = small_config();
  cfg.gen = GenSpec{3, 6, 18, 3, {}};
  cfg.bugs_per_program = 2;
  cfg.limited_bases = 4;
  const auto rep = run_experiment(cfg);
  for (const auto& s : rep.methods) {
    EXPECT_EQ(s.runs, 12u);
    EXPECT_GE(s.success_probability, 0.0);
  }
}

TEST(Experiment, ConfigValidation) {
  auto cfg = small_config();
  cfg.methods.clear();
  EXPECT_THROW(run_experiment(cfg), HarnessError);
  cfg = small_config();
  cfg.bugs_per_program = 6;
  EXPECT_THROW(run_experiment(cfg), HarnessError);
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::Proposed, Method::Linear, Method::Binary}) {
    EXPECT_EQ(method_from_string(to_string(m)), m);
  }
  EXPECT_THROW(method_from_string("bisect"), HarnessError);
}

}  // namespace
}  // namespace qbl
