#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dln/io.hpp"
#include "dln/problem.hpp"
#include "dln/theory.hpp"
#include "dln/trainer.hpp"

namespace dln {

/// Prng stream ids. The instance draws from (instance.seed, kInstanceStream); run seeds
/// initialize networks from (seed, kInitStream).
inline constexpr std::uint64_t kInstanceStream = 0;
inline constexpr std::uint64_t kInitStream = 1;

// ---------------------------------------------------------------------------
// Configuration

struct InstanceSpec {
  std::optional<std::string> path;  ///< instance JSON; overrides the synthetic fields
  std::size_t d_in = 10;
  std::size_t d_out = 3;
  std::size_t r = 5;
  double kappa = 4.0;
  double phi_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Either a fixed width or "auto" (required_width with the configured C and delta).
struct WidthSpec {
  bool automatic = false;
  std::size_t value = 0;
};

struct Constants {
  double C = 1.0;
  double C_B = 3.0;
  double c_mid = kDefaultMiddleConstant;
  double delta = 0.1;
  std::size_t exact_threshold = kExactGramThreshold;
  std::optional<std::size_t> m_cap;  ///< upper cap applied to "auto" widths
};

struct ExperimentConfig {
  InstanceSpec instance;
  std::vector<std::size_t> depths{3};
  std::vector<WidthSpec> widths{WidthSpec{false, 256}};
  std::optional<double> eta;  ///< nullopt means "max" (max_learning_rate per depth)
  bool allow_unsafe_eta = false;
  std::vector<std::uint64_t> seeds{1};
  std::size_t iters = 500;
  double stop_loss = 0.0;
  std::size_t record_stride = 10;
  double threshold_rel = 1e-6;  ///< "converged" means loss <= threshold_rel * ell0
  Constants constants;
  BudgetMode b_mode = BudgetMode::Measured;
  std::size_t workers = 1;
  std::string output_dir = "out";
  bool write_trajectories = true;
  bool allow_diverge = false;
};

/// Validates and converts a config document. Unknown keys and bad values raise
/// ConfigError naming the field path.
ExperimentConfig parse_config(const json& doc);

/// Parses JSON text; syntax errors raise ConfigError with "line L, column C".
json parse_config_text(const std::string& text);

ExperimentConfig load_config(const std::string& path);

json config_to_json(const ExperimentConfig& cfg);

/// Sets the value at a dotted path (e.g. "constants.C_B") from CLI text. Comma-separated
/// text becomes a list when the target is a list field.
void apply_override(json& doc, const std::string& dotted_path, const std::string& text);

/// Config paths that may be overridden from the command line.
const std::vector<std::string>& overridable_paths();

/// DLL_SEED in the environment replaces the seed list with that single seed.
void apply_env_overrides(ExperimentConfig& cfg);

ProblemInstance build_instance(const InstanceSpec& spec);

std::size_t resolve_width(const WidthSpec& spec, std::size_t L, const ProblemInstance& inst,
                          const Constants& constants);

// ---------------------------------------------------------------------------
// Runs and sweeps

struct SummaryRow {
  std::size_t L = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double ell0 = 0.0;
  double final_loss = 0.0;
  std::size_t iterations = 0;             ///< last t reached
  long long iters_to_threshold = -1;      ///< -1 when never reached
  bool envelope_ok = false;               ///< loss(t) <= bound(t) at every t
  std::size_t envelope_violations = 0;
  double a_rate = 0.0;  ///< fractions of snapshots where the property holds
  double b_rate = 0.0;
  double c_rate = 0.0;
  double left_upper = 0.0;  ///< worst B(t) margins over snapshots
  double left_lower = 0.0;
  double right_upper = 0.0;
  double right_lower = 0.0;
  double middle = 0.0;
  double max_drift_ratio = 0.0;  ///< max over snapshots of drift / R
  double lambda_min_lb_min = 0.0;
  double lambda_max_ub_max = 0.0;
  double max_e_ratio = 0.0;  ///< max over steps of e_norm / e_budget
  std::size_t e_violations = 0;
  std::size_t step_size_violations = 0;
  std::size_t chain_violations = 0;
  Termination termination = Termination::MaxIters;
  std::string phase;
};

const std::vector<std::string>& summary_csv_columns();
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows,
                       std::string_view comment = {});
std::vector<SummaryRow> read_summary_csv(std::istream& in);

struct CellResult {
  SummaryRow row;
  Trajectory trajectory;
};

/// Trains one (L, m, seed) cell with full instrumentation.
CellResult run_cell(const ExperimentConfig& cfg, const ProblemInstance& inst, std::size_t L,
                    std::size_t m, std::uint64_t seed);

/// Runs every grid cell x seed. When `trajectory_dir` is set, each run writes
/// L{L}_m{m}_seed{seed}.csv and .jsonl there. Rows come back in grid-major, seed-minor order.
std::vector<SummaryRow> run_grid(const ExperimentConfig& cfg, const ProblemInstance& inst,
                                 const std::optional<std::string>& trajectory_dir);

// ---------------------------------------------------------------------------
// Narrow chain (m = d_in = d_out = 1, x = y = 1)

struct NarrowChainConfig {
  std::vector<std::size_t> depths{1, 4, 8, 12};
  std::optional<double> eta;  ///< nullopt means 1 / (3 L)
  double eps = 0.5;
  std::size_t budget = 1'000'000;
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 1;
};

struct NarrowChainRun {
  std::size_t L = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;  ///< budget when censored
  bool censored = false;
  Termination termination = Termination::MaxIters;
};

struct NarrowChainResult {
  std::vector<NarrowChainRun> runs;
  std::vector<std::pair<std::size_t, double>> medians;  ///< per depth, censored at budget
};

/// Iterations of gradient descent on the scalar chain until loss <= eps * loss(0).
/// Weights come from init_xavier with shape (L, 1, 1, 1) and Prng(seed, kInitStream).
NarrowChainRun narrow_chain_run(std::size_t L, double eta, double eps, std::size_t budget,
                                std::uint64_t seed);

NarrowChainResult run_narrow_chain(const NarrowChainConfig& cfg);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Verification suites

struct VerifyReport {
  std::string suite;
  bool passed = false;
  json measurements;
  std::vector<std::string> lines;  ///< human-readable statistic vs threshold
};

struct InitSuiteParams {
  std::size_t L = 4, m = 512, d_in = 8, d_out = 2, r = 8;
  double kappa = 2.0;
  std::size_t seeds = 20;
  std::uint64_t seed = 1;
  std::size_t min_pass = 19;
  double c_mid = kDefaultMiddleConstant;
  std::size_t workers = 1;
};

struct Lemma1SuiteParams {
  std::size_t m = 2048, q = 4, d = 16, trials = 200;
  std::uint64_t seed = 1;
  double min_coverage = 0.95;
  std::size_t workers = 1;
};

struct Claim1SuiteParams {
  std::size_t L = 3, m = 64, d_in = 4, d_out = 2, samples = 20000;
  std::uint64_t seed = 1;
  double lo = 0.97, hi = 1.03;
  std::size_t workers = 1;
};

struct GramOracleSuiteParams {
  std::size_t cases = 50;
  std::uint64_t seed = 1;
  double sandwich_tol = 1e-9;  ///< relative
  double identity_tol = 1e-8;  ///< multiple of the network scale
};

struct GradientSuiteParams {
  std::uint64_t seed = 1;
  double max_rel_error = 1e-6;
  double fd_step = 1e-5;
};

VerifyReport verify_init_suite(const InitSuiteParams& p);
VerifyReport verify_lemma1_suite(const Lemma1SuiteParams& p);
VerifyReport verify_claim1_suite(const Claim1SuiteParams& p);
VerifyReport verify_gram_oracle_suite(const GramOracleSuiteParams& p);
VerifyReport verify_gradient_suite(const GradientSuiteParams& p);

/// The worked L = 2 example: W_1 = [[1,0],[0,1],[0,0]], W_2 = [[1,1,1]], X = I_2, Y = [1, 2].
NetworkState tiny_worked_state();
ProblemInstance tiny_worked_instance();

/// Max over layers of ||grad_i - fd_i||_F / max(||grad_i||_F, 1e-8), with fd_i from central
/// differences of the loss.
double gradient_fd_error(const NetworkState& state, const ProblemInstance& inst, double step);

}  // namespace dln
