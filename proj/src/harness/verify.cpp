#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dln/errors.hpp"
#include "dln/harness.hpp"
#include "dln/parallel.hpp"

namespace dln {

namespace {

std::string line(const std::string& name, double value, const std::string& rel, double threshold,
                 bool ok) {
  std::ostringstream s;
  s << name << " = " << format_double(value) << "  (required " << rel << ' '
    << format_double(threshold) << ")  " << (ok ? "ok" : "FAIL");
  return s.str();
}

}  // namespace

NetworkState tiny_worked_state() {
  Mat w1(3, 2);
  w1 << 1, 0, 0, 1, 0, 0;
  Mat w2(1, 3);
  w2 << 1, 1, 1;
  return NetworkState(NetworkShape{2, 3, 2, 1}, {w1, w2});
}

ProblemInstance tiny_worked_instance() {
  Mat phi(1, 2);
  phi << 1, 2;
  return make_instance(identity(2), phi);
}

double gradient_fd_error(const NetworkState& state, const ProblemInstance& inst, double step) {
  const std::vector<Mat> grads = gradients(state, inst);
  double worst = 0.0;
  std::vector<Mat> w = state.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    Mat fd(w[i].rows(), w[i].cols());
    for (Eigen::Index r = 0; r < w[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < w[i].cols(); ++c) {
        const double orig = w[i](r, c);
        w[i](r, c) = orig + step;
        const double up = loss(NetworkState(state.shape(), w), inst);
        w[i](r, c) = orig - step;
        const double down = loss(NetworkState(state.shape(), w), inst);
        w[i](r, c) = orig;
        fd(r, c) = (up - down) / (2.0 * step);
      }
    }
    const double denom = std::max(grads[i].norm(), 1e-8);
    worst = std::max(worst, (grads[i] - fd).norm() / denom);
  }
  return worst;
}

VerifyReport verify_init_suite(const InitSuiteParams& p) {
  if (p.seeds == 0) throw InvalidInput("init suite: seeds must be positive");
  Prng inst_prng(p.seed, kInstanceStream);
  const ProblemInstance inst = random_instance(inst_prng, p.d_in, p.d_out, p.r, p.kappa, 1.0);
  const NetworkShape shape{p.L, p.m, p.d_in, p.d_out};

  std::vector<ProductCheck> checks(p.seeds);
  parallel_for(p.seeds, p.workers, [&](std::size_t k) {
    Prng prng(p.seed + k, kInitStream);
    checks[k] = check_init_properties(init_xavier(shape, prng), inst, p.c_mid);
  });

  std::size_t two_sided = 0, middle = 0;
  json per_seed = json::array();
  for (const ProductCheck& c : checks) {
    two_sided += c.two_sided_ok;
    middle += c.middle_ok;
    per_seed.push_back(to_json(c));
  }
  VerifyReport rep;
  rep.suite = "init";
  rep.passed = two_sided >= p.min_pass;
  rep.measurements = {{"two_sided_pass", two_sided}, {"middle_pass", middle},
                      {"seeds", p.seeds},           {"kappa", inst.kappa},
                      {"per_seed", per_seed}};
  rep.lines.push_back(line("seeds passing 1.2/0.8 bounds", static_cast<double>(two_sided), ">=",
                           static_cast<double>(p.min_pass), rep.passed));
  rep.lines.push_back("seeds passing middle-product bound (c_mid = " + format_double(p.c_mid) +
                      "): " + std::to_string(middle) + "/" + std::to_string(p.seeds));
  return rep;
}

VerifyReport verify_lemma1_suite(const Lemma1SuiteParams& p) {
  const Lemma1Result r = verify_lemma1(p.m, p.q, p.d, p.trials, p.seed, p.workers);
  VerifyReport rep;
  rep.suite = "lemma1";
  rep.passed = r.coverage >= p.min_coverage;
  rep.measurements = {{"coverage", r.coverage},     {"inside", r.inside},
                      {"trials", r.trials},         {"mean_ratio", r.mean_ratio},
                      {"min_ratio", r.min_ratio},   {"max_ratio", r.max_ratio}};
  rep.lines.push_back(line("coverage of [0.9, 1.1]", r.coverage, ">=", p.min_coverage, rep.passed));
  rep.lines.push_back("ratio mean " + format_double(r.mean_ratio) + ", range [" +
                      format_double(r.min_ratio) + ", " + format_double(r.max_ratio) + "]");
  return rep;
}

VerifyReport verify_claim1_suite(const Claim1SuiteParams& p) {
  const NetworkShape shape{p.L, p.m, p.d_in, p.d_out};
  const Vec x = Vec::Ones(static_cast<Eigen::Index>(p.d_in));
  const Claim1Result r = verify_claim1(shape, x, p.samples, p.seed, p.workers);
  VerifyReport rep;
  rep.suite = "claim1";
  rep.passed = r.mean_ratio >= p.lo && r.mean_ratio <= p.hi;
  rep.measurements = {{"mean_ratio", r.mean_ratio}, {"std_error", r.std_error},
                      {"samples", r.samples}};
  std::ostringstream s;
  s << "mean ||s W x||^2 / ||x||^2 = " << format_double(r.mean_ratio) << " +- "
    << format_double(r.std_error) << "  (required in [" << format_double(p.lo) << ", "
    << format_double(p.hi) << "])  " << (rep.passed ? "ok" : "FAIL");
  rep.lines.push_back(s.str());
  return rep;
}

VerifyReport verify_gram_oracle_suite(const GramOracleSuiteParams& p) {
  constexpr std::size_t kSteps = 3;
  constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();
  std::size_t sandwich_ok = 0;
  std::size_t identity_checked = 0, identity_ok = 0;
  double worst_identity = 0.0;
  json cases = json::array();

  for (std::size_t k = 0; k < p.cases; ++k) {
    std::optional<ProblemInstance> inst;
    std::optional<NetworkState> state;
    if (k == 0) {
      inst = tiny_worked_instance();
      state = tiny_worked_state();
    } else {
      std::mt19937_64 pick(p.seed * 1000003u + k);
      auto draw = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(pick);
      };
      const std::size_t L = draw(1, 3), m = draw(1, 4), d_in = draw(1, 4), d_out = draw(1, 4);
      const std::size_t r = draw(1, d_in);
      const double kappa =
          r == 1 ? 1.0 : 1.0 + 3.0 * std::uniform_real_distribution<double>(0.0, 1.0)(pick);
      Prng prng(p.seed, k);
      inst = random_instance(prng, d_in, d_out, r, kappa, 1.0);
      state = init_xavier(NetworkShape{L, m, d_in, d_out}, prng);
    }

    const Mat P = gram_matrix_exact(*state, *inst, kNoLimit);
    const std::vector<double> spec = sym_eigenvalues(P);
    const GramBounds gb = gram_bounds(*state, *inst, 0);
    const double lam_max = spec.front();
    const double lam_min = spec.back();
    const double tol = p.sandwich_tol * std::max(std::abs(lam_max), 1e-300);
    const bool ok = gb.lambda_min_lb <= lam_min + tol && lam_max <= gb.lambda_max_ub + tol;
    sandwich_ok += ok;

    const double eta = max_learning_rate(*inst, state->depth());
    NetworkState cur = *state;
    double case_identity = 0.0;
    for (std::size_t t = 0; t < kSteps; ++t) {
      const std::vector<Mat> g = gradients(cur, *inst);
      NetworkState next = apply_step(cur, g, eta, t);
      const ResidualReport res =
          residual_E(cur, next, g, eta, *inst, gram_bounds(cur, *inst, 0), kNoLimit);
      ++identity_checked;
      const double value = res.identity_residual.value_or(INFINITY);
      case_identity = std::max(case_identity, value);
      identity_ok += value <= p.identity_tol * cur.scale();
      cur = std::move(next);
    }
    worst_identity = std::max(worst_identity, case_identity / state->scale());
    cases.push_back({{"L", state->depth()},
                     {"m", state->shape().m},
                     {"d_in", inst->d_in()},
                     {"d_out", inst->d_out()},
                     {"r", inst->r},
                     {"lambda_min", lam_min},
                     {"lambda_max", lam_max},
                     {"lambda_min_lb", gb.lambda_min_lb},
                     {"lambda_max_ub", gb.lambda_max_ub},
                     {"sandwich_ok", ok},
                     {"max_identity_residual", case_identity}});
  }

  VerifyReport rep;
  rep.suite = "gram-oracle";
  const bool sandwich_pass = sandwich_ok == p.cases;
  const bool identity_pass = identity_ok == identity_checked;
  rep.passed = sandwich_pass && identity_pass;
  rep.measurements = {{"cases", p.cases},
                      {"sandwich_ok", sandwich_ok},
                      {"identity_checked", identity_checked},
                      {"identity_ok", identity_ok},
                      {"max_identity_residual_over_scale", worst_identity},
                      {"per_case", cases}};
  rep.lines.push_back(line("cases with lb <= spectrum <= ub", static_cast<double>(sandwich_ok),
                           "=", static_cast<double>(p.cases), sandwich_pass));
  rep.lines.push_back(line("max identity residual / scale", worst_identity, "<=", p.identity_tol,
                           identity_pass));
  return rep;
}

VerifyReport verify_gradient_suite(const GradientSuiteParams& p) {
  struct Case {
    std::size_t L, m, d_in, d_out, r;
  };
  static const Case cases[] = {
      {1, 1, 3, 2, 2}, {2, 4, 3, 2, 3}, {2, 3, 4, 1, 2}, {5, 3, 3, 2, 3}, {5, 4, 2, 3, 2}};
  double worst = 0.0;
  json per_case = json::array();
  std::size_t k = 0;
  for (const Case& c : cases) {
    Prng prng(p.seed, k++);
    const ProblemInstance inst = random_instance(prng, c.d_in, c.d_out, c.r, c.r == 1 ? 1.0 : 2.0, 1.0);
    const NetworkState state = init_xavier(NetworkShape{c.L, c.m, c.d_in, c.d_out}, prng);
    const double err = gradient_fd_error(state, inst, p.fd_step);
    worst = std::max(worst, err);
    per_case.push_back({{"L", c.L}, {"m", c.m}, {"d_in", c.d_in}, {"d_out", c.d_out},
                        {"r", c.r}, {"rel_error", err}});
  }
  VerifyReport rep;
  rep.suite = "gradient";
  rep.passed = worst <= p.max_rel_error;
  rep.measurements = {{"max_rel_error", worst}, {"per_case", per_case}};
  rep.lines.push_back(line("max relative error vs central differences", worst, "<=",
                           p.max_rel_error, rep.passed));
  return rep;
}

}  // namespace dln
