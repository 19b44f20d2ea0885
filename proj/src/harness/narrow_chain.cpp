#include <algorithm>
#include <cmath>

#include "dln/errors.hpp"
#include "dln/harness.hpp"
#include "dln/parallel.hpp"

namespace dln {

double median(std::vector<double> values) {
  if (values.empty()) {
    throw InvalidInput("median of an empty list");
  }
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

NarrowChainRun narrow_chain_run(std::size_t L, double eta, double eps, std::size_t budget,
                                std::uint64_t seed) {
  if (L == 0) throw InvalidDimension("narrow chain: L must be positive");
  if (!(eta > 0.0)) throw InvalidInput("narrow chain: eta must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("narrow chain: eps must lie in (0, 1)");

  // Same draws as init_xavier on the (L, 1, 1, 1) shape; the scale is 1.
  Prng prng(seed, kInitStream);
  const NetworkState init = init_xavier(NetworkShape{L, 1, 1, 1}, prng);
  std::vector<double> w(L);
  for (std::size_t i = 0; i < L; ++i) {
    w[i] = init.weight(i + 1)(0, 0);
  }

  NarrowChainRun run{L, seed, budget, true, Termination::MaxIters};
  std::vector<double> prefix(L + 1), suffix(L + 1);
  auto product = [&] {
    double p = 1.0;
    for (double v : w) p *= v;
    return p;
  };
  double p = product();
  const double ell0 = 0.5 * (p - 1.0) * (p - 1.0);
  const double target = eps * ell0;
  for (std::size_t t = 0; t < budget; ++t) {
    const double ell = 0.5 * (p - 1.0) * (p - 1.0);
    if (ell <= target) {
      run.iterations = t;
      run.censored = false;
      run.termination = Termination::Converged;
      return run;
    }
    if (!std::isfinite(ell) || ell > kDivergenceFactor * ell0) {
      run.termination = Termination::Diverged;
      return run;
    }
    prefix[0] = 1.0;
    for (std::size_t i = 0; i < L; ++i) prefix[i + 1] = prefix[i] * w[i];
    suffix[L] = 1.0;
    for (std::size_t i = L; i-- > 0;) suffix[i] = suffix[i + 1] * w[i];
    const double r = p - 1.0;
    for (std::size_t i = 0; i < L; ++i) {
      w[i] -= eta * r * prefix[i] * suffix[i + 1];
    }
    p = product();
  }
  const double ell = 0.5 * (p - 1.0) * (p - 1.0);
  if (ell <= target) {
    run.iterations = budget;
    run.censored = false;
    run.termination = Termination::Converged;
  }
  return run;
}

NarrowChainResult run_narrow_chain(const NarrowChainConfig& cfg) {
  if (cfg.depths.empty()) throw InvalidInput("narrow chain: no depths given");
  if (cfg.seeds.empty()) throw InvalidInput("narrow chain: no seeds given");
  NarrowChainResult out;
  out.runs.resize(cfg.depths.size() * cfg.seeds.size());
  parallel_for(out.runs.size(), cfg.workers, [&](std::size_t k) {
    const std::size_t L = cfg.depths[k / cfg.seeds.size()];
    const std::uint64_t seed = cfg.seeds[k % cfg.seeds.size()];
    const double eta = cfg.eta ? *cfg.eta : 1.0 / (3.0 * static_cast<double>(L));
    out.runs[k] = narrow_chain_run(L, eta, cfg.eps, cfg.budget, seed);
  });
  for (std::size_t d = 0; d < cfg.depths.size(); ++d) {
    std::vector<double> its;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      its.push_back(static_cast<double>(out.runs[d * cfg.seeds.size() + s].iterations));
    }
    out.medians.emplace_back(cfg.depths[d], median(std::move(its)));
  }
  return out;
}

}  // namespace dln
