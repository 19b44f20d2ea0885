// dln: run, sweep, narrow-chain and verify front end.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "dln/errors.hpp"
#include "dln/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string flag_name(std::string path) {
  std::replace(path.begin(), path.end(), '.', '-');
  return "--" + path;
}

bool is_switch(const std::string& path) {
  return path == "allow_unsafe_eta" || path == "allow_diverge";
}

/// Config-backed subcommand: --config plus one flag per overridable field.
struct ConfigCommand {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;

  void attach(CLI::App* sub) {
    sub->add_option("--config,-c", config_path, "experiment config (JSON)")->required();
    for (const std::string& path : dln::overridable_paths()) {
      if (is_switch(path)) {
        switches[path] = false;
        std::string names = flag_name(path);
        std::string dashed = path;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        if (dashed != path) names += ",--" + dashed;
        sub->add_flag(names, switches[path], "override " + path);
      } else {
        sub->add_option(flag_name(path), values[path], "override " + path);
      }
    }
  }

  dln::ExperimentConfig load(const CLI::App* sub) const {
    std::ifstream in(config_path);
    if (!in) {
      throw dln::ConfigError(config_path, "cannot open config file");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    dln::json doc = dln::parse_config_text(buf.str());
    for (const auto& [path, text] : values) {
      if (sub->count(flag_name(path)) > 0) {
        dln::apply_override(doc, path, text);
      }
    }
    for (const auto& [path, on] : switches) {
      if (on) {
        dln::apply_override(doc, path, "true");
      }
    }
    dln::ExperimentConfig cfg = dln::parse_config(doc);
    dln::apply_env_overrides(cfg);
    return cfg;
  }
};

void print_rows(const std::vector<dln::SummaryRow>& rows) {
  std::cout << "L\tm\tseed\tell0\tfinal_loss\titers_to_thr\tenvelope\tB_rate\tC_rate\tmax_e_ratio\t"
               "termination\n";
  for (const auto& r : rows) {
    std::cout << r.L << '\t' << r.m << '\t' << r.seed << '\t' << dln::format_double(r.ell0) << '\t'
              << dln::format_double(r.final_loss) << '\t' << r.iters_to_threshold << '\t'
              << (r.envelope_ok ? "ok" : "violated") << '\t' << dln::format_double(r.b_rate)
              << '\t' << dln::format_double(r.c_rate) << '\t'
              << dln::format_double(r.max_e_ratio) << '\t' << dln::to_string(r.termination)
              << '\n';
  }
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(path);
  fn(out);
  if (!out) {
    throw dln::Error("cannot write '" + path.string() + "'");
  }
}

int cmd_grid(const dln::ExperimentConfig& cfg, bool sweep) {
  const dln::ProblemInstance inst = dln::build_instance(cfg.instance);
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "config.json",
             [&](std::ostream& o) { o << dln::config_to_json(cfg).dump(2) << '\n'; });
  write_file(dir / "instance.json",
             [&](std::ostream& o) { o << dln::instance_to_json(inst).dump(2) << '\n'; });

  std::optional<std::string> traj_dir;
  if (!sweep && cfg.write_trajectories) {
    traj_dir = (dir / "trajectories").string();
  }
  const auto rows = dln::run_grid(cfg, inst, traj_dir);
  const std::string name = sweep ? "sweep.csv" : "summary.csv";
  write_file(dir / name, [&](std::ostream& o) {
    dln::write_summary_csv(o, rows, std::string("dln ") + (sweep ? "sweep" : "run") + " " + timestamp());
  });
  print_rows(rows);
  std::cout << "wrote " << (dir / name).string() << '\n';

  const auto diverged = std::count_if(rows.begin(), rows.end(), [](const dln::SummaryRow& r) {
    return r.termination == dln::Termination::Diverged;
  });
  if (!sweep && diverged > 0 && !cfg.allow_diverge) {
    std::cerr << "error: " << diverged << " run(s) diverged (pass --allow-diverge to accept)\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient descent on deep linear networks with theory instrumentation"};
  app.require_subcommand(1);

  ConfigCommand run_opts, sweep_opts;
  CLI::App* run = app.add_subcommand("run", "train every grid cell and seed, writing trajectories");
  run_opts.attach(run);
  CLI::App* sweep = app.add_subcommand("sweep", "summary-only grid sweep with a phase column");
  sweep_opts.attach(sweep);

  CLI::App* chain = app.add_subcommand("narrow-chain", "iterations to eps * loss(0) on the scalar chain");
  std::vector<std::size_t> chain_L{1, 4, 8, 12};
  std::string chain_eta = "inv3L";
  double chain_eps = 0.5;
  std::size_t chain_budget = 1'000'000, chain_seeds = 50, chain_workers = 1;
  std::uint64_t chain_seed0 = 1;
  std::string chain_out;
  chain->add_option("--L", chain_L, "depths")->delimiter(',');
  chain->add_option("--eta", chain_eta, "learning rate, or inv3L for 1/(3L)");
  chain->add_option("--eps", chain_eps, "target fraction of loss(0)");
  chain->add_option("--budget", chain_budget, "iteration budget (censoring value)");
  chain->add_option("--seeds", chain_seeds, "seeds per depth");
  chain->add_option("--seed0", chain_seed0, "first seed");
  chain->add_option("--workers", chain_workers);
  chain->add_option("--output-dir", chain_out, "write narrow_chain.csv and medians here");

  CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite;
  verify->add_option("suite", suite, "init | lemma1 | claim1 | gram-oracle | gradient")->required();
  dln::InitSuiteParams ip;
  dln::Lemma1SuiteParams lp;
  dln::Claim1SuiteParams cp;
  dln::GramOracleSuiteParams gp;
  dln::GradientSuiteParams dp;
  std::optional<std::size_t> v_L, v_m, v_d_in, v_d_out, v_r, v_q, v_d, v_trials, v_samples,
      v_seeds, v_cases, v_workers, v_min_pass;
  std::optional<std::uint64_t> v_seed;
  std::optional<double> v_kappa, v_min_cov, v_c_mid;
  std::string v_json;
  verify->add_option("--L", v_L);
  verify->add_option("--m", v_m);
  verify->add_option("--d_in", v_d_in);
  verify->add_option("--d_out", v_d_out);
  verify->add_option("--r", v_r);
  verify->add_option("--kappa", v_kappa);
  verify->add_option("--q", v_q);
  verify->add_option("--d", v_d);
  verify->add_option("--trials", v_trials);
  verify->add_option("--samples", v_samples);
  verify->add_option("--seeds", v_seeds, "init: number of seeds");
  verify->add_option("--min-pass", v_min_pass, "init: seeds required to pass");
  verify->add_option("--cases", v_cases);
  verify->add_option("--seed", v_seed);
  verify->add_option("--workers", v_workers);
  verify->add_option("--min-coverage", v_min_cov);
  verify->add_option("--c_mid", v_c_mid);
  verify->add_option("--json", v_json, "write measurements to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) {
      return cmd_grid(run_opts.load(run), false);
    }
    if (sweep->parsed()) {
      return cmd_grid(sweep_opts.load(sweep), true);
    }
    if (chain->parsed()) {
      dln::NarrowChainConfig cfg;
      cfg.depths = chain_L;
      if (chain_eta != "inv3L") {
        try {
          cfg.eta = dln::parse_double(chain_eta);
        } catch (const dln::InvalidInput&) {
          throw dln::ConfigError("--eta", "expected a number or inv3L");
        }
      }
      cfg.eps = chain_eps;
      cfg.budget = chain_budget;
      cfg.workers = chain_workers;
      for (std::size_t k = 0; k < chain_seeds; ++k) {
        cfg.seeds.push_back(chain_seed0 + k);
      }
      if (const char* env = std::getenv("DLL_SEED"); env != nullptr && *env != '\0') {
        cfg.seeds = {std::stoull(env)};
      }
      const dln::NarrowChainResult res = dln::run_narrow_chain(cfg);
      std::cout << "L\tmedian_iterations\tcensored\n";
      for (std::size_t d = 0; d < res.medians.size(); ++d) {
        const std::size_t L = res.medians[d].first;
        const auto censored = std::count_if(res.runs.begin(), res.runs.end(), [&](const auto& r) {
          return r.L == L && r.censored;
        });
        std::cout << L << '\t' << dln::format_double(res.medians[d].second) << '\t' << censored
                  << '/' << cfg.seeds.size() << '\n';
      }
      if (!chain_out.empty()) {
        const std::filesystem::path dir(chain_out);
        std::filesystem::create_directories(dir);
        write_file(dir / "narrow_chain.csv", [&](std::ostream& o) {
          o << "# dln narrow-chain " << timestamp() << '\n';
          o << "L,seed,iterations,censored,termination\n";
          for (const auto& r : res.runs) {
            o << r.L << ',' << r.seed << ',' << r.iterations << ',' << (r.censored ? 1 : 0) << ','
              << dln::to_string(r.termination) << '\n';
          }
        });
        write_file(dir / "narrow_chain_medians.csv", [&](std::ostream& o) {
          o << "# dln narrow-chain " << timestamp() << '\n';
          o << "L,median_iterations\n";
          for (const auto& [L, med] : res.medians) {
            o << L << ',' << dln::format_double(med) << '\n';
          }
        });
      }
      return kExitOk;
    }
    if (verify->parsed()) {
      dln::VerifyReport rep;
      if (suite == "init") {
        if (v_L) ip.L = *v_L;
        if (v_m) ip.m = *v_m;
        if (v_d_in) ip.d_in = *v_d_in;
        if (v_d_out) ip.d_out = *v_d_out;
        if (v_r) ip.r = *v_r;
        if (v_kappa) ip.kappa = *v_kappa;
        if (v_seeds) ip.seeds = *v_seeds;
        if (v_min_pass) ip.min_pass = *v_min_pass;
        if (v_seed) ip.seed = *v_seed;
        if (v_c_mid) ip.c_mid = *v_c_mid;
        if (v_workers) ip.workers = *v_workers;
        rep = dln::verify_init_suite(ip);
      } else if (suite == "lemma1") {
        if (v_m) lp.m = *v_m;
        if (v_q) lp.q = *v_q;
        if (v_d) lp.d = *v_d;
        if (v_trials) lp.trials = *v_trials;
        if (v_seed) lp.seed = *v_seed;
        if (v_min_cov) lp.min_coverage = *v_min_cov;
        if (v_workers) lp.workers = *v_workers;
        rep = dln::verify_lemma1_suite(lp);
      } else if (suite == "claim1") {
        if (v_L) cp.L = *v_L;
        if (v_m) cp.m = *v_m;
        if (v_d_in) cp.d_in = *v_d_in;
        if (v_d_out) cp.d_out = *v_d_out;
        if (v_samples) cp.samples = *v_samples;
        if (v_seed) cp.seed = *v_seed;
        if (v_workers) cp.workers = *v_workers;
        rep = dln::verify_claim1_suite(cp);
      } else if (suite == "gram-oracle") {
        if (v_cases) gp.cases = *v_cases;
        if (v_seed) gp.seed = *v_seed;
        rep = dln::verify_gram_oracle_suite(gp);
      } else if (suite == "gradient") {
        if (v_seed) dp.seed = *v_seed;
        rep = dln::verify_gradient_suite(dp);
      } else {
        std::cerr << "error: unknown suite '" << suite
                  << "' (expected init, lemma1, claim1, gram-oracle or gradient)\n";
        return kExitConfig;
      }
      std::cout << "verify " << rep.suite << '\n';
      for (const std::string& l : rep.lines) {
        std::cout << "  " << l << '\n';
      }
      std::cout << (rep.passed ? "PASS" : "FAIL") << '\n';
      if (!v_json.empty()) {
        write_file(v_json, [&](std::ostream& o) {
          o << dln::json{{"suite", rep.suite}, {"passed", rep.passed},
                         {"measurements", rep.measurements}}
                   .dump(2)
            << '\n';
        });
      }
      return rep.passed ? kExitOk : kExitVerify;
    }
  } catch (const dln::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
