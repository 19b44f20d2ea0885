#include "dln/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "dln/errors.hpp"

namespace dln {

std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw InvalidInput("not a number: '" + std::string(text) + "'");
  }
  return v;
}

json mat_to_json(const Mat& a) {
  json data = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      data.push_back(a(i, j));
    }
  }
  return {{"rows", a.rows()}, {"cols", a.cols()}, {"data", std::move(data)}};
}

Mat mat_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() ||
      data.size() != static_cast<std::size_t>(rows * cols)) {
    throw InvalidDimension("matrix JSON: data length does not equal rows x cols");
  }
  Mat a(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!data[k].is_number()) {
        throw NumericInput("matrix JSON: entry " + std::to_string(k) + " is not a number");
      }
      a(i, c) = data[k++].get<double>();
    }
  }
  require_finite(a, "matrix JSON");
  return a;
}

json instance_to_json(const ProblemInstance& inst) {
  return {{"xbar", mat_to_json(inst.xbar)},
          {"ybar", mat_to_json(inst.ybar)},
          {"phi", mat_to_json(inst.phi)},
          {"r", inst.r},
          {"kappa", inst.kappa},
          {"sigma_max", inst.sigma_max},
          {"sigma_min", inst.sigma_min},
          {"opt", inst.opt},
          {"phi_norm", inst.phi_norm}};
}

ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst =
      make_instance(mat_from_json(j.at("xbar")), mat_from_json(j.at("phi")), j.value("opt", 0.0));
  if (j.contains("ybar")) {
    const Mat ybar = mat_from_json(j.at("ybar"));
    if (ybar.rows() != inst.ybar.rows() || ybar.cols() != inst.ybar.cols() ||
        (ybar - inst.ybar).norm() > 1e-8 * std::max(1.0, inst.ybar.norm())) {
      throw InvalidInput("instance JSON: ybar does not equal phi * xbar");
    }
  }
  return inst;
}

json network_to_json(const NetworkState& state) {
  const NetworkShape& s = state.shape();
  json weights = json::array();
  for (const Mat& w : state.weights()) {
    weights.push_back(mat_to_json(w));
  }
  return {{"shape", {{"L", s.L}, {"m", s.m}, {"d_in", s.d_in}, {"d_out", s.d_out}}},
          {"scale", state.scale()},
          {"weights", std::move(weights)}};
}

NetworkState network_from_json(const json& j) {
  const json& s = j.at("shape");
  NetworkShape shape{s.at("L").get<std::size_t>(), s.at("m").get<std::size_t>(),
                     s.at("d_in").get<std::size_t>(), s.at("d_out").get<std::size_t>()};
  std::vector<Mat> weights;
  for (const json& w : j.at("weights")) {
    weights.push_back(mat_from_json(w));
  }
  NetworkState state(shape, std::move(weights));
  if (j.contains("scale") && j.at("scale").get<double>() != state.scale()) {
    throw InvalidInput("network JSON: stored scale does not match the shape");
  }
  return state;
}

json to_json(const GramBounds& g) {
  json out = {{"lambda_max_ub", g.lambda_max_ub}, {"lambda_min_lb", g.lambda_min_lb}};
  if (g.exact_spectrum) {
    out["exact_spectrum"] = *g.exact_spectrum;
  }
  return out;
}

json to_json(const ProductCheck& c) {
  const ProductMargins& g = c.margins;
  return {{"left_upper", g.left_upper},   {"left_lower", g.left_lower},
          {"right_upper", g.right_upper}, {"right_lower", g.right_lower},
          {"middle", g.middle},           {"middle_vacuous", g.middle_vacuous},
          {"upper", c.upper},             {"lower", c.lower},
          {"c_mid", c.c_mid},             {"two_sided_ok", c.two_sided_ok},
          {"middle_ok", c.middle_ok},     {"ok", c.ok()}};
}

json to_json(const PropertyReport& r) {
  return {{"A_ok", r.a_ok},
          {"B_ok", r.b_ok},
          {"C_ok", r.c_ok},
          {"A_ratio", r.a_ratio},
          {"B_margins", to_json(r.b_check)},
          {"C_max_drift", r.c_max_drift},
          {"drift_budget_R", r.drift_budget_r},
          {"drift_budget_R_measured", r.drift_budget_r_measured},
          {"drift_budget_R_formula", r.drift_budget_r_formula}};
}

json to_json(const ResidualReport& r) {
  json out = {{"e_norm", r.e_norm}, {"budget", r.budget}, {"delta_u_norm", r.delta_u_norm}};
  out["identity_residual"] = r.identity_residual ? json(*r.identity_residual) : json(nullptr);
  return out;
}

json to_json(const TrajectoryRecord& r) {
  return {{"t", r.t},
          {"loss", r.loss},
          {"predicted_bound", r.predicted_bound},
          {"lambda_min_lb", r.lambda_min_lb},
          {"lambda_max_ub", r.lambda_max_ub},
          {"A_ok", r.a_ok},
          {"B_ok", r.b_ok},
          {"C_ok", r.c_ok},
          {"max_drift", r.max_drift},
          {"drift", r.drift},
          {"drift_budget_R", r.drift_budget_r},
          {"e_norm", r.e_norm},
          {"e_budget", r.e_budget},
          {"eta", r.eta}};
}

const std::vector<std::string>& trajectory_csv_columns() {
  static const std::vector<std::string> cols = {
      "t",     "loss",  "predicted_bound", "lambda_min_lb",  "lambda_max_ub",
      "A_ok",  "B_ok",  "C_ok",            "max_drift",      "drift_budget_R",
      "e_norm", "e_budget", "eta"};
  return cols;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRecord>& records,
                          std::string_view comment) {
  if (!comment.empty()) {
    out << "# " << comment << '\n';
  }
  const auto& cols = trajectory_csv_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out << (c ? "," : "") << cols[c];
  }
  out << '\n';
  for (const TrajectoryRecord& r : records) {
    out << r.t << ',' << format_double(r.loss) << ',' << format_double(r.predicted_bound) << ','
        << format_double(r.lambda_min_lb) << ',' << format_double(r.lambda_max_ub) << ','
        << (r.a_ok ? 1 : 0) << ',' << (r.b_ok ? 1 : 0) << ',' << (r.c_ok ? 1 : 0) << ','
        << format_double(r.max_drift) << ',' << format_double(r.drift_budget_r) << ','
        << format_double(r.e_norm) << ',' << format_double(r.e_budget) << ','
        << format_double(r.eta) << '\n';
  }
}

std::vector<TrajectoryRecord> read_trajectory_csv(std::istream& in) {
  std::string line;
  bool have_header = false;
  std::vector<TrajectoryRecord> out;
  const auto& cols = trajectory_csv_columns();
  auto flag = [](const std::string& s) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw InvalidInput("trajectory CSV: boolean field '" + s + "' is not 0/1");
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields != cols) {
        throw InvalidInput("trajectory CSV: unexpected header '" + line + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != cols.size()) {
      throw InvalidInput("trajectory CSV: row has " + std::to_string(fields.size()) + " fields");
    }
    TrajectoryRecord r;
    r.t = static_cast<std::size_t>(std::stoull(fields[0]));
    r.loss = parse_double(fields[1]);
    r.predicted_bound = parse_double(fields[2]);
    r.lambda_min_lb = parse_double(fields[3]);
    r.lambda_max_ub = parse_double(fields[4]);
    r.a_ok = flag(fields[5]);
    r.b_ok = flag(fields[6]);
    r.c_ok = flag(fields[7]);
    r.max_drift = parse_double(fields[8]);
    r.drift_budget_r = parse_double(fields[9]);
    r.e_norm = parse_double(fields[10]);
    r.e_budget = parse_double(fields[11]);
    r.eta = parse_double(fields[12]);
    r.instrumented = !std::isnan(r.lambda_min_lb);
    out.push_back(std::move(r));
  }
  if (!have_header) {
    throw InvalidInput("trajectory CSV: missing header");
  }
  return out;
}

void write_trajectory_jsonl(std::ostream& out, const std::vector<TrajectoryRecord>& records) {
  for (const TrajectoryRecord& r : records) {
    out << to_json(r).dump() << '\n';
  }
}

}  // namespace dln
