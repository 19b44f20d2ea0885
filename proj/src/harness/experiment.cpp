#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "dln/errors.hpp"
#include "dln/harness.hpp"
#include "dln/parallel.hpp"

namespace dln {

namespace {

std::string phase_of(const SummaryRow& row) {
  if (row.iters_to_threshold < 0) {
    return "not-converged";
  }
  return row.envelope_ok ? "converged-within-envelope" : "converged-outside-envelope";
}

std::string trajectory_stem(std::size_t L, std::size_t m, std::uint64_t seed) {
  return "L" + std::to_string(L) + "_m" + std::to_string(m) + "_seed" + std::to_string(seed);
}

void check_stream(const std::ostream& out, const std::string& path) {
  if (!out) {
    throw Error("cannot write '" + path + "'");
  }
}

}  // namespace

const std::vector<std::string>& summary_csv_columns() {
  static const std::vector<std::string> cols = {
      "L",           "m",           "seed",           "eta",
      "ell0",        "final_loss",  "iterations",     "iters_to_threshold",
      "envelope_ok", "envelope_violations", "A_rate", "B_rate",
      "C_rate",      "left_upper",  "left_lower",     "right_upper",
      "right_lower", "middle",      "max_drift_ratio", "lambda_min_lb_min",
      "lambda_max_ub_max", "max_e_ratio", "e_violations", "step_size_violations",
      "chain_violations", "termination", "phase"};
  return cols;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows,
                       std::string_view comment) {
  if (!comment.empty()) {
    out << "# " << comment << '\n';
  }
  const auto& cols = summary_csv_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out << (c ? "," : "") << cols[c];
  }
  out << '\n';
  for (const SummaryRow& r : rows) {
    out << r.L << ',' << r.m << ',' << r.seed << ',' << format_double(r.eta) << ','
        << format_double(r.ell0) << ',' << format_double(r.final_loss) << ',' << r.iterations
        << ',' << r.iters_to_threshold << ',' << (r.envelope_ok ? 1 : 0) << ','
        << r.envelope_violations << ',' << format_double(r.a_rate) << ','
        << format_double(r.b_rate) << ',' << format_double(r.c_rate) << ','
        << format_double(r.left_upper) << ',' << format_double(r.left_lower) << ','
        << format_double(r.right_upper) << ',' << format_double(r.right_lower) << ','
        << format_double(r.middle) << ',' << format_double(r.max_drift_ratio) << ','
        << format_double(r.lambda_min_lb_min) << ',' << format_double(r.lambda_max_ub_max)
        << ',' << format_double(r.max_e_ratio) << ',' << r.e_violations << ','
        << r.step_size_violations << ',' << r.chain_violations << ','
        << to_string(r.termination) << ',' << r.phase << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  const auto& cols = summary_csv_columns();
  std::vector<SummaryRow> rows;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    const auto f = split_csv_line(line);
    if (!have_header) {
      if (f != cols) {
        throw InvalidInput("summary CSV: unexpected header '" + line + "'");
      }
      have_header = true;
      continue;
    }
    if (f.size() != cols.size()) {
      throw InvalidInput("summary CSV: row has " + std::to_string(f.size()) + " fields");
    }
    SummaryRow r;
    r.L = std::stoull(f[0]);
    r.m = std::stoull(f[1]);
    r.seed = std::stoull(f[2]);
    r.eta = parse_double(f[3]);
    r.ell0 = parse_double(f[4]);
    r.final_loss = parse_double(f[5]);
    r.iterations = std::stoull(f[6]);
    r.iters_to_threshold = std::stoll(f[7]);
    r.envelope_ok = f[8] == "1";
    r.envelope_violations = std::stoull(f[9]);
    r.a_rate = parse_double(f[10]);
    r.b_rate = parse_double(f[11]);
    r.c_rate = parse_double(f[12]);
    r.left_upper = parse_double(f[13]);
    r.left_lower = parse_double(f[14]);
    r.right_upper = parse_double(f[15]);
    r.right_lower = parse_double(f[16]);
    r.middle = parse_double(f[17]);
    r.max_drift_ratio = parse_double(f[18]);
    r.lambda_min_lb_min = parse_double(f[19]);
    r.lambda_max_ub_max = parse_double(f[20]);
    r.max_e_ratio = parse_double(f[21]);
    r.e_violations = std::stoull(f[22]);
    r.step_size_violations = std::stoull(f[23]);
    r.chain_violations = std::stoull(f[24]);
    if (f[25] == to_string(Termination::Converged)) {
      r.termination = Termination::Converged;
    } else if (f[25] == to_string(Termination::MaxIters)) {
      r.termination = Termination::MaxIters;
    } else if (f[25] == to_string(Termination::Diverged)) {
      r.termination = Termination::Diverged;
    } else {
      throw InvalidInput("summary CSV: unknown termination '" + f[25] + "'");
    }
    r.phase = f[26];
    rows.push_back(std::move(r));
  }
  if (!have_header) {
    throw InvalidInput("summary CSV: missing header");
  }
  return rows;
}

CellResult run_cell(const ExperimentConfig& cfg, const ProblemInstance& inst, std::size_t L,
                    std::size_t m, std::uint64_t seed) {
  const NetworkShape shape{L, m, inst.d_in(), inst.d_out()};
  Prng prng(seed, kInitStream);
  const NetworkState state0 = init_xavier(shape, prng);

  TrainConfig tc;
  tc.eta = cfg.eta ? *cfg.eta : max_learning_rate(inst, L);
  tc.max_iters = cfg.iters;
  tc.stop_loss = cfg.stop_loss;
  tc.record_stride = cfg.record_stride;
  tc.allow_unsafe_eta = cfg.allow_unsafe_eta;
  tc.delta = cfg.constants.delta;
  tc.c_b = cfg.constants.C_B;

  ProbeOptions po;
  po.budgets.c_mid = cfg.constants.c_mid;
  po.budgets.mode = cfg.b_mode;
  po.exact_threshold = cfg.constants.exact_threshold;
  TheoryProbe probe(inst, po);

  CellResult out{SummaryRow{}, train(state0, inst, tc, &probe)};
  const Trajectory& traj = out.trajectory;
  SummaryRow& row = out.row;
  row.L = L;
  row.m = m;
  row.seed = seed;
  row.eta = tc.eta;
  row.ell0 = traj.model.ell0;
  row.final_loss = traj.losses.back();
  row.iterations = traj.losses.size() - 1;
  row.termination = traj.termination;

  const double threshold = cfg.threshold_rel * row.ell0;
  auto in_envelope = [&](std::size_t t) {
    return traj.losses[t] <= predicted_loss_bound(t, traj.model) * (1.0 + 1e-12);
  };
  for (std::size_t t = 0; t < traj.losses.size(); ++t) {
    if (row.iters_to_threshold < 0 && traj.losses[t] <= threshold) {
      row.iters_to_threshold = static_cast<long long>(t);
    }
    if (!in_envelope(t)) {
      ++row.envelope_violations;
    }
  }
  row.envelope_ok = row.envelope_violations == 0;

  const auto& reports = probe.reports();
  const double inf = std::numeric_limits<double>::infinity();
  row.left_lower = inf;
  row.right_lower = inf;
  row.lambda_min_lb_min = inf;
  std::size_t a = 0, b = 0, c = 0;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const PropertyReport& rep = reports[k];
    const TrajectoryRecord& rec = traj.records[k];
    a += rep.a_ok;
    b += rep.b_ok;
    c += rep.c_ok;
    const ProductMargins& g = rep.b_check.margins;
    row.left_upper = std::max(row.left_upper, g.left_upper);
    row.left_lower = std::min(row.left_lower, g.left_lower);
    row.right_upper = std::max(row.right_upper, g.right_upper);
    row.right_lower = std::min(row.right_lower, g.right_lower);
    row.middle = std::max(row.middle, g.middle);
    if (rep.drift_budget_r > 0.0) {
      row.max_drift_ratio = std::max(row.max_drift_ratio, rep.c_max_drift / rep.drift_budget_r);
    }
    row.lambda_min_lb_min = std::min(row.lambda_min_lb_min, rec.lambda_min_lb);
    row.lambda_max_ub_max = std::max(row.lambda_max_ub_max, rec.lambda_max_ub);
    // C(t) should imply B(t); A(t) with B(t) should carry the envelope to t + 1.
    if (rep.c_ok && !rep.b_ok) {
      ++row.chain_violations;
    }
    if (rep.a_ok && rep.b_ok && rec.t + 1 < traj.losses.size() && !in_envelope(rec.t + 1)) {
      ++row.chain_violations;
    }
  }
  if (!reports.empty()) {
    const double n = static_cast<double>(reports.size());
    row.a_rate = static_cast<double>(a) / n;
    row.b_rate = static_cast<double>(b) / n;
    row.c_rate = static_cast<double>(c) / n;
  }
  row.max_e_ratio = probe.max_e_ratio();
  row.e_violations = probe.e_violations();
  row.step_size_violations = probe.step_size_violations();
  row.phase = phase_of(row);
  return out;
}

std::vector<SummaryRow> run_grid(const ExperimentConfig& cfg, const ProblemInstance& inst,
                                 const std::optional<std::string>& trajectory_dir) {
  if (cfg.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (cfg.depths.empty()) throw ConfigError("grid.L", "grid must not be empty");
  if (cfg.widths.empty()) throw ConfigError("grid.m", "grid must not be empty");

  struct Cell {
    std::size_t L, m;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t L : cfg.depths) {
    if (cfg.eta && !cfg.allow_unsafe_eta && *cfg.eta > max_learning_rate(inst, L) * (1.0 + 1e-12)) {
      throw ConfigError("eta", "exceeds the safe learning rate " +
                                   format_double(max_learning_rate(inst, L)) + " at L = " +
                                   std::to_string(L) + " (set allow_unsafe_eta to override)");
    }
    for (const WidthSpec& w : cfg.widths) {
      const std::size_t m = resolve_width(w, L, inst, cfg.constants);
      for (std::uint64_t seed : cfg.seeds) {
        cells.push_back(Cell{L, m, seed});
      }
    }
  }
  if (trajectory_dir) {
    std::filesystem::create_directories(*trajectory_dir);
  }

  std::vector<SummaryRow> rows(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t k) {
    const Cell& cell = cells[k];
    CellResult res = run_cell(cfg, inst, cell.L, cell.m, cell.seed);
    if (trajectory_dir) {
      const auto stem = std::filesystem::path(*trajectory_dir) /
                        trajectory_stem(cell.L, cell.m, cell.seed);
      const std::string csv_path = stem.string() + ".csv";
      std::ofstream csv(csv_path);
      write_trajectory_csv(csv, res.trajectory.records);
      check_stream(csv, csv_path);
      const std::string jsonl_path = stem.string() + ".jsonl";
      std::ofstream jsonl(jsonl_path);
      write_trajectory_jsonl(jsonl, res.trajectory.records);
      check_stream(jsonl, jsonl_path);
    }
    rows[k] = std::move(res.row);
  });
  return rows;
}

}  // namespace dln
