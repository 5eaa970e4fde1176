// quantimed: run, compare and inspect decentralized SGD simulations.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quantimed/experiment.hpp"
#include "quantimed/metrics.hpp"

namespace fs = std::filesystem;
using namespace quantimed;

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

// Raised for problems that belong with the configuration (missing file,
// malformed override) rather than the simulation.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides,
                      const std::optional<std::uint64_t>& seed) {
  std::string text = read_text(path);
  if (!text.empty() && text.back() != '\n') text += '\n';
  for (const std::string& kv : overrides) {
    if (kv.find('=') == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    text += kv + '\n';
  }
  if (seed) text += "seed = " + std::to_string(*seed) + '\n';
  return parse_config(text);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_derived(std::ostream& out, const RunRecord& r) {
  const DerivedValues& d = r.derived;
  out << "# kappa=" << fmt(d.kappa) << " beta=" << fmt(d.beta) << " T_d=" << fmt(d.deadline)
      << " alpha=" << fmt(d.alpha) << " eps=" << fmt(d.eps) << " E[1/V]=" << fmt(d.expected_inverse_speed)
      << " b_eff=" << fmt(d.effective_batch) << " comm_s=" << fmt(d.comm_seconds) << '\n'
      << "# " << r.objective_note << "; digest " << r.models_digest;
  if (r.clamped > 0) out << "; " << r.clamped << " coordinates clamped";
  out << '\n';
}

int cmd_run(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& out,
            const std::string& format, const std::vector<std::string>& overrides) {
  const ExperimentConfig cfg = load(config, overrides, seed);
  const RunRecord record = run_experiment(cfg);
  if (out.empty()) {
    if (format == "json") std::cout << to_json(record);
    else write_csv(std::cout, record);
    return kOk;
  }
  const RecordFormat f = format.empty() ? format_for_path(out, RecordFormat::kCsv) : parse_format(format);
  write_record(record, out, f);
  print_derived(std::cerr, record);
  return kOk;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out_dir, std::size_t jobs,
                const std::vector<std::string>& overrides) {
  std::vector<ExperimentConfig> configs;
  for (const std::string& p : paths) configs.push_back(load(p, overrides, std::nullopt));
  const std::vector<RunRecord> records = sweep(configs, jobs);
  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "summary.csv");
  if (!summary) throw std::runtime_error("cannot write summary in '" + out_dir + "'");
  summary << "config,algo,iter,sim_time_s,loss,gap,consensus,bytes,digest\n";
  for (std::size_t k = 0; k < records.size(); ++k) {
    const std::string stem = fs::path(paths[k]).stem().string() + "_" + std::to_string(k);
    write_record(records[k], fs::path(out_dir) / (stem + ".csv"), RecordFormat::kCsv);
    write_record(records[k], fs::path(out_dir) / (stem + ".json"), RecordFormat::kJson);
    const MetricsRow& last = records[k].rows.back();
    summary << stem << ',' << to_string(configs[k].algo) << ',' << last.iteration << ',' << fmt(last.sim_time) << ','
            << fmt(last.loss) << ',' << fmt(last.gap) << ',' << fmt(last.consensus) << ',' << last.bytes << ','
            << records[k].models_digest << '\n';
  }
  std::cout << "wrote " << records.size() << " records to " << out_dir << '\n';
  return kOk;
}

int cmd_topo_report(const std::string& config, const std::string& edges) {
  const Experiment exp(load(config, {}, std::nullopt));
  const Graph& g = exp.graph();
  std::cout << "nodes " << g.size() << ", edges " << g.edges().size() << ", kappa " << fmt(exp.derived().kappa)
            << ", lambda_max(L) " << fmt(laplacian_lambda_max(g)) << '\n';
  std::cout << format_report(validate_mixing(exp.mixing(), &g));
  const double eps = exp.derived().eps;
  std::cout << "lazy beta (eps=" << fmt(eps) << ") " << fmt(lazy_beta(exp.mixing(), eps)) << '\n';
  if (!edges.empty()) {
    std::ofstream out(edges);
    if (!out) throw std::runtime_error("cannot write '" + edges + "'");
    write_edge_list(out, g);
  }
  return kOk;
}

std::vector<double> parse_t_list(const std::string& list) {
  std::vector<double> ts;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v <= 0) throw UsageError("--T-list expects positive integers, got '" + item + "'");
    ts.push_back(static_cast<double>(v));
  }
  if (ts.empty()) throw UsageError("--T-list is empty");
  return ts;
}

int cmd_bounds(const std::string& config, const std::string& t_list, std::optional<double> delta_flag) {
  const std::vector<double> ts = parse_t_list(t_list);
  const Experiment exp(load(config, {}, std::nullopt));
  const Problem& prob = exp.problem();
  const TheoryConstants c = estimate_theory_constants(prob.objective, prob.shards, exp.mixing(), exp.quantizer(),
                                                      exp.speed(), exp.derived().deadline);
  const double delta = delta_flag.value_or(exp.config().delta.value_or(0.4));
  if (!(delta > 0.0 && delta < 0.5)) throw UsageError("--delta must lie in (0, 1/2)");
  const bool convex = c.mu > 0.0;
  std::cout << "# mu=" << fmt(c.mu) << " K=" << fmt(c.K) << " gamma^2=" << fmt(c.gamma_sq)
            << " sigma^2=" << fmt(c.sigma_sq) << " beta=" << fmt(c.beta) << " D^2=" << fmt(c.D_sq)
            << (c.D_sq_is_estimate ? " (estimate)" : "") << " delta=" << fmt(delta) << '\n';
  if (convex) std::cout << "# rate stated for T >= " << fmt(convex_min_iterations(c, delta)) << '\n';
  std::cout << "T,theorem1_leading,theorem1_variance,theorem1_bound,theorem2_grad,theorem2_consensus\n";
  for (double T : ts) {
    const Theorem2Bounds t2 = theorem2_bounds(c, T);
    std::cout << static_cast<long long>(T) << ',';
    if (convex) {
      const Theorem1Terms t1 = theorem1_terms(c, T, delta);
      std::cout << fmt(t1.leading) << ',' << fmt(t1.variance) << ',' << fmt(t1.total());
    } else {
      std::cout << ",,";
    }
    std::cout << ',' << fmt(t2.convergence) << ',' << fmt(t2.consensus) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator for QuanTimed-DSGD and decentralized SGD baselines"};
  app.require_subcommand(1);

  std::string config, out, format, edges, t_list, out_dir;
  std::vector<std::string> configs, overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  std::size_t jobs = 1;

  CLI::App* run = app.add_subcommand("run", "Run one configuration");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--out", out, "Output file (stdout when omitted)");
  run->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--set", overrides, "Extra key=value line, applied after the file");

  CLI::App* compare = app.add_subcommand("compare", "Run several configurations and summarize");
  compare->add_option("--configs", configs, "Config files")->required();
  compare->add_option("--out", out_dir, "Output directory")->required();
  compare->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  compare->add_option("--set", overrides, "Extra key=value line applied to every config");

  CLI::App* topo = app.add_subcommand("topo-report", "Spectral checks for the configured topology");
  topo->add_option("--config", config, "Config file")->required();
  topo->add_option("--edges", edges, "Also write the edge list here");

  CLI::App* bounds = app.add_subcommand("bounds", "Evaluate the convergence envelopes");
  bounds->add_option("--config", config, "Config file")->required();
  bounds->add_option("--T-list", t_list, "Comma-separated iteration counts")->required();
  bounds->add_option("--delta", delta, "Exponent for the strongly convex envelope");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kConfigFailure;
  }

  try {
    if (*run) return cmd_run(config, seed, out, format, overrides);
    if (*compare) return cmd_compare(configs, out_dir, jobs, overrides);
    if (*topo) return cmd_topo_report(config, edges);
    if (*bounds) return cmd_bounds(config, t_list, delta);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigFailure;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kConfigFailure;
}
