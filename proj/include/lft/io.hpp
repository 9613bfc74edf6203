#pragma once

// File formats: trajectory CSVs, binary checkpoints with a JSON header, and
// the on-disk instance dataset.

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lft/lfo.hpp"

namespace lft::io {

using Json = nlohmann::ordered_json;

/// "%.17g"; round-trips every finite double.
std::string format_double(double v);
/// Whole-token decimal parse. Throws IoError.
double parse_double(const std::string& token);

std::string read_text(const std::string& path);
/// Creates parent directories. Throws IoError.
void write_text(const std::string& path, const std::string& content);

/// Time series: header `t,<prefix>_0,...`, one row per time.
struct Series {
  std::vector<double> times;
  std::vector<std::string> columns;  // without the leading t
  Matrix values;                     // times x columns
};
std::string series_csv(const std::vector<double>& times, const Matrix& values, const std::string& prefix);
void write_series_csv(const std::string& path, const std::vector<double>& times, const Matrix& values,
                      const std::string& prefix);
/// Throws IoError on a malformed file or times that do not strictly increase.
Series read_series_csv(const std::string& path);

/// Space-time field: header `t,x,value`, time-major rows.
struct Field {
  std::vector<double> times;
  std::vector<double> space;
  Matrix values;  // times x space
};
std::string field_csv(const std::vector<double>& times, const std::vector<double>& space,
                      const Matrix& values);
void write_field_csv(const std::string& path, const std::vector<double>& times,
                     const std::vector<double>& space, const Matrix& values);
/// Throws IoError unless every time block lists the same strictly increasing x.
Field read_field_csv(const std::string& path);

/// Header plus every value; `csv_row` joins already formatted cells.
std::string csv_row(const std::vector<std::string>& cells);

// Checkpoints ------------------------------------------------------------------

struct Checkpoint {
  Json header;
  std::vector<double> values;
};

/// One JSON line, then the values as little-endian float64. The header gains
/// "count".
void write_checkpoint(const std::string& path, Json header, std::span<const double> values);
/// Throws IoError when the file cannot be read, CheckpointMismatch when the
/// header or payload is malformed.
Checkpoint read_checkpoint(const std::string& path);

/// Parameter layout (name, rows, cols) in declaration order.
Json parameter_layout(const ParamSet& params);
/// Throws CheckpointMismatch unless `layout` matches `params` exactly.
void check_layout(const Json& layout, const ParamSet& params);

void save_lfo(const std::string& path, const lfo::LfoNet& net, const lfo::Dataset& trained_on);
/// Throws CheckpointMismatch for a checkpoint of another kind or shape.
lfo::LfoNet load_lfo(const std::string& path);

// Datasets ---------------------------------------------------------------------

/// manifest.json plus inst_<i>_solution.csv, inst_<i>_force.csv and
/// inst_<i>_params.json per kept instance.
void write_dataset(const std::string& dir, const lfo::Dataset& data, Index requested);
/// Throws IoError when files are missing or disagree with the manifest.
lfo::Dataset read_dataset(const std::string& dir);

/// Solution of one stored instance as a model observation set.
lfm::Observations observations_of(const lfo::Dataset& data, std::size_t position);

}  // namespace lft::io
