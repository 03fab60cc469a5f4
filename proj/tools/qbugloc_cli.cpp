// qbugloc command-line front end.
//
//   qbugloc generate   --qubits 2 --segments 10 --gates 30 -o prog.json
//   qbugloc inject     -i prog.json -o buggy.json --injection inj.json
//   qbugloc oracles    -i prog.json -o oracles/
//   qbugloc locate     -i buggy.json --oracles oracles/ -o result.json --trace trace.jsonl
//   qbugloc experiment -c experiment.json -o report.json --csv report.csv
//   qbugloc risk       --alpha 0.05 --beta 0.2 --w 1 --path-len 3 --x 5 --l 10
//
// The default seed comes from QBUGLOC_SEED; --seed overrides it.
// Exit status: 0 success, 1 usage or configuration error, 2 search failed.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qbugloc/qbugloc.hpp"

namespace fs = std::filesystem;
using qbl::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailed = 2;

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("QBUGLOC_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used, 0);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw qbl::io::FormatError(std::string("QBUGLOC_SEED is not an integer: ") + v);
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           std::optional<std::uint64_t> fallback = std::nullopt) {
  if (flag) return *flag;
  if (fallback) return *fallback;
  return env_seed().value_or(0);
}

std::string oracle_path(const fs::path& dir, int segment) {
  return (dir / ("oracle_" + std::to_string(segment) + ".json")).string();
}

qbl::OracleSet load_oracles(const fs::path& dir, int segments) {
  if (!fs::is_directory(dir)) {
    throw qbl::io::FormatError("oracle directory not found: " + dir.string());
  }
  qbl::OracleSet out;
  for (int k = 1; k <= segments; ++k) {
    const auto path = oracle_path(dir, k);
    if (fs::exists(path)) {
      out.emplace(k, qbl::io::oracle_from_json(qbl::io::read_json_file(path)));
    }
  }
  return out;
}

std::vector<qbl::GateKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<qbl::GateKind> out;
  for (const auto& n : names) out.push_back(qbl::gate_kind_from_string(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locate buggy segments in segmented quantum programs"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  // generate
  auto* gen = app.add_subcommand("generate", "Random segmented program");
  qbl::GenSpec gen_spec;
  std::vector<std::string> gen_kinds;
  std::string gen_out;
  gen->add_option("--qubits", gen_spec.n_qubits, "Number of qubits")->capture_default_str();
  gen->add_option("--segments", gen_spec.n_segments, "Number of segments")->capture_default_str();
  gen->add_option("--gates", gen_spec.n_gates, "Total gate count")->capture_default_str();
  gen->add_option("--gate-kinds", gen_kinds, "Restrict the gate kinds drawn");
  gen->add_option("--seed", seed_flag, "RNG seed");
  gen->add_option("-o,--out", gen_out, "Output circuit JSON")->required();

  // inject
  auto* inj = app.add_subcommand("inject", "Replace one gate per selected segment");
  std::string inj_in, inj_out, inj_record;
  int inj_bugs = 1;
  std::optional<int> inj_segment, inj_position;
  inj->add_option("-i,--in", inj_in, "Reference circuit JSON")->required()->check(CLI::ExistingFile);
  inj->add_option("-o,--out", inj_out, "Buggy circuit JSON")->required();
  inj->add_option("--injection", inj_record, "Injection record JSON")->required();
  inj->add_option("--bugs", inj_bugs, "Number of bugs in distinct segments")->capture_default_str();
  inj->add_option("--segment", inj_segment, "Fixed segment (single bug)");
  inj->add_option("--position", inj_position, "Fixed gate position (requires --segment)");
  inj->add_option("--seed", seed_flag, "RNG seed");

  // oracles
  auto* orc = app.add_subcommand("oracles", "Per-segment oracles from a reference circuit");
  std::string orc_in, orc_out;
  std::size_t orc_limited = 0;
  orc->add_option("-i,--in", orc_in, "Reference circuit JSON")->required()->check(CLI::ExistingFile);
  orc->add_option("-o,--out", orc_out, "Output directory")->required();
  orc->add_option("--limited-bases", orc_limited, "Declare only this many bases (0 = all)")
      ->capture_default_str();
  orc->add_option("--seed", seed_flag, "RNG seed for basis selection");

  // locate
  auto* loc = app.add_subcommand("locate", "Search for the buggy segment");
  std::string loc_in, loc_oracles, loc_config, loc_out, loc_trace, loc_tree;
  std::string loc_method = "proposed", loc_backend = "simulator";
  std::vector<std::string> loc_ablations;
  loc->add_option("-i,--in", loc_in, "Circuit under test")->required()->check(CLI::ExistingFile);
  loc->add_option("--oracles", loc_oracles, "Oracle directory")->required();
  loc->add_option("-c,--config", loc_config, "Search config JSON")->check(CLI::ExistingFile);
  loc->add_option("--method", loc_method, "proposed, linear or binary")
      ->check(CLI::IsMember({"proposed", "linear", "binary"}))
      ->capture_default_str();
  loc->add_option("--ablation", loc_ablations, "Disable a technique of the proposed search")
      ->check(CLI::IsMember({"no_cost_tree", "no_early", "no_finalization", "no_lookback"}));
  loc->add_option("--backend", loc_backend, "simulator or exact")
      ->check(CLI::IsMember({"simulator", "exact"}))
      ->capture_default_str();
  loc->add_option("-o,--out", loc_out, "Result JSON (stdout if omitted)");
  loc->add_option("--trace", loc_trace, "Trace JSON lines");
  loc->add_option("--tree", loc_tree, "Search tree dump");
  loc->add_option("--seed", seed_flag, "RNG seed");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Corpus experiment over the methods");
  std::string exp_config, exp_out, exp_csv;
  std::optional<unsigned> exp_threads;
  exp->add_option("-c,--config", exp_config, "Experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  exp->add_option("-o,--out", exp_out, "Report JSON")->required();
  exp->add_option("--csv", exp_csv, "Summary table");
  exp->add_option("--threads", exp_threads, "Worker threads (0 = all cores)");
  exp->add_option("--seed", seed_flag, "Corpus seed");

  // risk
  auto* risk = app.add_subcommand("risk", "Probability of returning to an earlier node");
  double r_alpha = 0.05, r_beta = 0.2;
  int r_w = 1, r_path = 1, r_x = 1, r_l = 2;
  risk->add_option("--alpha", r_alpha)->capture_default_str();
  risk->add_option("--beta", r_beta)->capture_default_str();
  risk->add_option("--w", r_w, "Same-direction edges in a row")->required();
  risk->add_option("--path-len", r_path, "Edges on the path")->required();
  risk->add_option("--x", r_x, "Segment tested at the suspicious node")->required();
  risk->add_option("--l", r_l, "Number of segments")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      gen_spec.seed = resolve_seed(seed_flag);
      gen_spec.gate_kinds = parse_kinds(gen_kinds);
      qbl::Rng rng(gen_spec.seed);
      const auto program = qbl::generate_program(gen_spec, rng);
      qbl::io::write_text_file(gen_out, qbl::io::dump(qbl::io::to_json(program)));
      return kExitOk;
    }

    if (*inj) {
      const auto program = qbl::io::program_from_json(qbl::io::read_json_file(inj_in));
      qbl::Rng rng(resolve_seed(seed_flag));
      json record = json::array();
      if (inj_position && !inj_segment) {
        throw qbl::io::FormatError("--position requires --segment");
      }
      qbl::SegmentedProgram buggy = program;
      if (inj_segment) {
        if (inj_bugs != 1) throw qbl::io::FormatError("--segment implies a single bug");
        if (*inj_segment < 1 || *inj_segment > program.size()) {
          throw qbl::io::FormatError("--segment out of range");
        }
        const auto gates = program.segment(*inj_segment).gate_count();
        const int pos = inj_position
                            ? *inj_position
                            : static_cast<int>(qbl::uniform_index(rng, gates));
        if (pos < 0 || static_cast<std::size_t>(pos) >= gates) {
          throw qbl::io::FormatError("--position out of range");
        }
        auto [b, injection] = qbl::inject_bug_at(program, *inj_segment, pos, rng);
        buggy = std::move(b);
        record.push_back(qbl::io::to_json(injection));
      } else {
        auto [b, injections] = qbl::inject_bugs(program, inj_bugs, rng);
        buggy = std::move(b);
        for (const auto& i : injections) record.push_back(qbl::io::to_json(i));
      }
      qbl::io::write_text_file(inj_out, qbl::io::dump(qbl::io::to_json(buggy)));
      qbl::io::write_text_file(inj_record, qbl::io::dump(record));
      std::cout << "output difference "
                << qbl::io::format_number(qbl::output_difference(program, buggy)) << '\n';
      return kExitOk;
    }

    if (*orc) {
      const auto program = qbl::io::program_from_json(qbl::io::read_json_file(orc_in));
      qbl::Rng rng(resolve_seed(seed_flag));
      const auto oracles = qbl::reference_oracles(program, orc_limited, rng);
      fs::create_directories(orc_out);
      for (const auto& [k, o] : oracles) {
        qbl::io::write_text_file(oracle_path(orc_out, k), qbl::io::dump(qbl::io::to_json(o)));
      }
      return kExitOk;
    }

    if (*loc) {
      const auto program = qbl::io::program_from_json(qbl::io::read_json_file(loc_in));
      const auto oracles = load_oracles(loc_oracles, program.size());
      qbl::SearchConfig cfg;
      if (!loc_config.empty()) {
        cfg = qbl::io::search_config_from_json(qbl::io::read_json_file(loc_config));
      }
      const auto ablations = qbl::io::ablations_from_json(json(loc_ablations));
      const auto method = qbl::method_from_string(loc_method);
      if (ablations.any() && method != qbl::Method::Proposed) {
        throw qbl::io::FormatError("ablations apply only to the proposed method");
      }
      auto backend = qbl::make_backend(
          loc_backend == "exact" ? qbl::BackendKind::Exact : qbl::BackendKind::Simulator,
          program);
      const auto costs = qbl::prefix_costs(program);
      qbl::Rng rng(resolve_seed(seed_flag));
      const auto result =
          qbl::run_method(method, costs, *backend, oracles, cfg, rng, ablations);

      const auto text = qbl::io::dump(qbl::io::to_json(result));
      if (loc_out.empty()) {
        std::cout << text;
      } else {
        qbl::io::write_text_file(loc_out, text);
      }
      if (!loc_trace.empty()) qbl::io::write_text_file(loc_trace, qbl::io::trace_jsonl(result));
      if (!loc_tree.empty()) {
        const auto rule = method == qbl::Method::Proposed && !ablations.no_cost_tree
                              ? qbl::MiddleRule::CostBased
                              : qbl::MiddleRule::Central;
        qbl::io::write_text_file(
            loc_tree, qbl::io::dump(qbl::io::tree_dump(qbl::SearchTree::compose(costs, rule))));
      }
      if (!result.located()) {
        std::cerr << "search failed: " << result.failure_reason << '\n';
        return kExitFailed;
      }
      return kExitOk;
    }

    if (*exp) {
      const json raw = qbl::io::read_json_file(exp_config);
      auto cfg = qbl::io::experiment_config_from_json(raw);
      std::optional<std::uint64_t> cfg_seed;
      if (raw.contains("gen") && raw.at("gen").contains("seed")) cfg_seed = cfg.gen.seed;
      cfg.gen.seed = resolve_seed(seed_flag, cfg_seed);
      if (exp_threads) cfg.threads = *exp_threads;
      const auto report = qbl::run_experiment(cfg);
      qbl::io::write_text_file(exp_out, qbl::io::dump(qbl::io::to_json(report)));
      const auto table = qbl::io::report_csv(report);
      if (!exp_csv.empty()) qbl::io::write_text_file(exp_csv, table);
      std::cout << table;
      return kExitOk;
    }

    if (*risk) {
      std::cout << qbl::io::format_number(
                       qbl::return_probability(r_alpha, r_beta, r_w, r_path, r_x, r_l))
                << '\n';
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
