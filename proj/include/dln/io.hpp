#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dln/network.hpp"
#include "dln/problem.hpp"
#include "dln/theory.hpp"
#include "dln/trainer.hpp"

namespace dln {

using json = nlohmann::json;

/// Shortest round-trip decimal form ('.' separator, locale independent); "nan"/"inf" for
/// non-finite values.
std::string format_double(double v);

/// Strict parse of a full field produced by format_double. Throws InvalidInput.
double parse_double(std::string_view text);

/// {"rows": r, "cols": c, "data": [row-major entries]}
json mat_to_json(const Mat& a);
Mat mat_from_json(const json& j);

json instance_to_json(const ProblemInstance& inst);
/// Rebuilds the instance from xbar, phi and opt, then checks the stored ybar agrees to 1e-8.
ProblemInstance instance_from_json(const json& j);

json network_to_json(const NetworkState& state);
NetworkState network_from_json(const json& j);

json to_json(const GramBounds& g);
json to_json(const ProductCheck& c);
json to_json(const PropertyReport& r);
json to_json(const ResidualReport& r);
json to_json(const TrajectoryRecord& r);

/// Column order of the trajectory CSV.
const std::vector<std::string>& trajectory_csv_columns();

/// Header row then one row per snapshot. Lines starting with '#' are comments;
/// `comment` (if nonempty) is emitted as a leading comment line.
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRecord>& records,
                          std::string_view comment = {});

/// Parses the CSV schema written above (skipping comments). Throws InvalidInput on a
/// header or field mismatch.
std::vector<TrajectoryRecord> read_trajectory_csv(std::istream& in);

/// One JSON object per snapshot, one per line.
void write_trajectory_jsonl(std::ostream& out, const std::vector<TrajectoryRecord>& records);

/// Splits one CSV line on commas (the schemas here never quote fields).
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace dln
