#include "lft/io.hpp"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lft::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& token) {
  if (token.empty()) throw IoError("empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || errno == ERANGE) {
    throw IoError("not a number: '" + token + "'");
  }
  return v;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  line += '\n';
  return line;
}

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw IoError(path + ": empty CSV");
  return rows;
}

std::vector<double> json_doubles(const Json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(x.get<double>());
  return v;
}

}  // namespace

std::string series_csv(const std::vector<double>& times, const Matrix& values, const std::string& prefix) {
  if (static_cast<Index>(times.size()) != values.rows()) {
    throw DimensionMismatch("series_csv: one row per time expected");
  }
  std::vector<std::string> header{"t"};
  for (Index c = 0; c < values.cols(); ++c) header.push_back(prefix + "_" + std::to_string(c));
  std::string out = csv_row(header);
  for (Index n = 0; n < values.rows(); ++n) {
    std::vector<std::string> cells{format_double(times[static_cast<std::size_t>(n)])};
    for (Index c = 0; c < values.cols(); ++c) cells.push_back(format_double(values(n, c)));
    out += csv_row(cells);
  }
  return out;
}

void write_series_csv(const std::string& path, const std::vector<double>& times, const Matrix& values,
                      const std::string& prefix) {
  write_text(path, series_csv(times, values, prefix));
}

Series read_series_csv(const std::string& path) {
  const auto rows = parse_csv(read_text(path), path);
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "t") throw IoError(path + ": header must start with t");
  Series s;
  s.columns.assign(header.begin() + 1, header.end());
  s.values.resize(static_cast<Index>(rows.size() - 1), static_cast<Index>(s.columns.size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) throw IoError(path + ": ragged row " + std::to_string(r));
    const double t = parse_double(rows[r][0]);
    if (!s.times.empty() && !(t > s.times.back())) throw IoError(path + ": times must increase");
    s.times.push_back(t);
    for (std::size_t c = 1; c < header.size(); ++c) {
      s.values(static_cast<Index>(r - 1), static_cast<Index>(c - 1)) = parse_double(rows[r][c]);
    }
  }
  return s;
}

std::string field_csv(const std::vector<double>& times, const std::vector<double>& space,
                      const Matrix& values) {
  if (values.rows() != static_cast<Index>(times.size()) || values.cols() != static_cast<Index>(space.size())) {
    throw DimensionMismatch("field_csv: values must be times x space");
  }
  std::string out = csv_row({"t", "x", "value"});
  for (Index n = 0; n < values.rows(); ++n) {
    for (Index k = 0; k < values.cols(); ++k) {
      out += csv_row({format_double(times[static_cast<std::size_t>(n)]),
                      format_double(space[static_cast<std::size_t>(k)]), format_double(values(n, k))});
    }
  }
  return out;
}

void write_field_csv(const std::string& path, const std::vector<double>& times,
                     const std::vector<double>& space, const Matrix& values) {
  write_text(path, field_csv(times, space, values));
}

Field read_field_csv(const std::string& path) {
  const auto rows = parse_csv(read_text(path), path);
  if (rows.front() != std::vector<std::string>{"t", "x", "value"}) {
    throw IoError(path + ": header must be t,x,value");
  }
  Field f;
  std::vector<double> values;
  std::vector<double> block_x;
  auto finish_block = [&] {
    if (f.times.size() == 1) {
      f.space = block_x;
    } else if (block_x != f.space) {
      throw IoError(path + ": x differs between time blocks");
    }
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) throw IoError(path + ": ragged row " + std::to_string(r));
    const double t = parse_double(rows[r][0]);
    const double x = parse_double(rows[r][1]);
    if (f.times.empty() || t != f.times.back()) {
      if (!f.times.empty()) {
        if (!(t > f.times.back())) throw IoError(path + ": times must increase");
        finish_block();
      }
      f.times.push_back(t);
      block_x.clear();
    }
    if (!block_x.empty() && !(x > block_x.back())) throw IoError(path + ": x must increase within a time");
    block_x.push_back(x);
    values.push_back(parse_double(rows[r][2]));
  }
  if (f.times.empty()) throw IoError(path + ": no rows");
  finish_block();
  f.values.resize(static_cast<Index>(f.times.size()), static_cast<Index>(f.space.size()));
  for (Index n = 0; n < f.values.rows(); ++n) {
    for (Index k = 0; k < f.values.cols(); ++k) {
      f.values(n, k) = values[static_cast<std::size_t>(n * f.values.cols() + k)];
    }
  }
  return f;
}

// Checkpoints ------------------------------------------------------------------

void write_checkpoint(const std::string& path, Json header, std::span<const double> values) {
  header["count"] = values.size();
  std::string content = header.dump();
  content += '\n';
  const std::size_t offset = content.size();
  content.resize(offset + values.size() * sizeof(double));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(content.data() + offset + i * sizeof(double), &bits, sizeof bits);
  }
  write_text(path, content);
}

Checkpoint read_checkpoint(const std::string& path) {
  const std::string content = read_text(path);
  const std::size_t nl = content.find('\n');
  if (nl == std::string::npos) throw CheckpointMismatch(path + ": missing header line");
  Checkpoint c;
  try {
    c.header = Json::parse(content.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatch(path + ": bad header: " + e.what());
  }
  if (!c.header.is_object() || c.header.value("format", "") != "lft-checkpoint" ||
      !c.header.contains("count")) {
    throw CheckpointMismatch(path + ": not a checkpoint");
  }
  const std::size_t count = c.header["count"].get<std::size_t>();
  const std::size_t bytes = content.size() - nl - 1;
  if (bytes != count * sizeof(double)) throw CheckpointMismatch(path + ": payload size differs from count");
  c.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, content.data() + nl + 1 + i * sizeof(double), sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    c.values[i] = std::bit_cast<double>(bits);
  }
  return c;
}

Json parameter_layout(const ParamSet& params) {
  Json layout = Json::array();
  for (const Parameter& p : params) {
    layout.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  return layout;
}

void check_layout(const Json& layout, const ParamSet& params) {
  if (!layout.is_array() || layout.size() != static_cast<std::size_t>(params.size())) {
    throw CheckpointMismatch("parameter count differs from the checkpoint");
  }
  for (int i = 0; i < params.size(); ++i) {
    const Json& e = layout[static_cast<std::size_t>(i)];
    const Parameter& p = params[i];
    if (e.value("name", "") != p.name || e.value("rows", Index{-1}) != p.value.rows() ||
        e.value("cols", Index{-1}) != p.value.cols()) {
      throw CheckpointMismatch("parameter " + p.name + " differs from the checkpoint");
    }
  }
}

void save_lfo(const std::string& path, const lfo::LfoNet& net, const lfo::Dataset& trained_on) {
  const lfo::Architecture& a = net.arch();
  Json h;
  h["format"] = "lft-checkpoint";
  h["version"] = 1;
  h["kind"] = "lfo";
  h["model"] = lfm::to_string(trained_on.family);
  h["architecture"] = {{"outputs", a.outputs}, {"forces", a.forces},
                       {"phi", a.phi},         {"width", a.width},
                       {"modes", {a.modes.first, a.modes.second}},
                       {"layers", a.layers},   {"dims", a.dims}};
  h["grid"] = {trained_on.grid.rows, trained_on.grid.cols};
  h["normalization"] = {{"mean", std::vector<double>(net.input_mean().begin(), net.input_mean().end())},
                        {"scale", std::vector<double>(net.input_scale().begin(), net.input_scale().end())}};
  h["phi_names"] = trained_on.phi_names;
  h["parameters"] = parameter_layout(net.params());
  const std::vector<double> flat = net.params().flatten();
  write_checkpoint(path, std::move(h), flat);
}

lfo::LfoNet load_lfo(const std::string& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.header.value("kind", "") != "lfo") throw CheckpointMismatch(path + ": not an LFO checkpoint");
  try {
    const Json& j = c.header.at("architecture");
    lfo::Architecture a;
    a.outputs = j.at("outputs").get<Index>();
    a.forces = j.at("forces").get<Index>();
    a.phi = j.at("phi").get<Index>();
    a.width = j.at("width").get<Index>();
    a.modes = {j.at("modes").at(0).get<Index>(), j.at("modes").at(1).get<Index>()};
    a.layers = j.at("layers").get<Index>();
    a.dims = j.at("dims").get<int>();
    lfo::LfoNet net(a, 0);
    check_layout(c.header.at("parameters"), net.params());
    if (c.values.size() != net.params().scalar_count()) throw CheckpointMismatch(path + ": value count");
    net.params().assign(c.values);
    const std::vector<double> mean = json_doubles(c.header.at("normalization").at("mean"));
    const std::vector<double> scale = json_doubles(c.header.at("normalization").at("scale"));
    net.set_normalization(Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size())),
                          Eigen::Map<const Vector>(scale.data(), static_cast<Index>(scale.size())));
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatch(path + ": " + e.what());
  } catch (const ChannelMismatch& e) {
    throw CheckpointMismatch(path + ": " + e.what());
  } catch (const DimensionMismatch& e) {
    throw CheckpointMismatch(path + ": " + e.what());
  }
}

// Datasets ---------------------------------------------------------------------

namespace {

std::string inst_path(const std::string& dir, Index i, const char* what) {
  return (fs::path(dir) / ("inst_" + std::to_string(i) + "_" + what)).string();
}

bool is_field(const lfo::Dataset& d) { return d.grid.rows > 1; }

Matrix as_field(const Matrix& row, lfo::GridShape grid) {
  Matrix m(grid.rows, grid.cols);
  for (Index r = 0; r < grid.rows; ++r) {
    for (Index c = 0; c < grid.cols; ++c) m(r, c) = row(0, r * grid.cols + c);
  }
  return m;
}

Matrix flatten_field(const Matrix& m) {
  Matrix row(1, m.size());
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) row(0, r * m.cols() + c) = m(r, c);
  }
  return row;
}

}  // namespace

void write_dataset(const std::string& dir, const lfo::Dataset& data, Index requested) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const bool field = is_field(data);
  if (field ? (static_cast<Index>(data.times.size()) != data.grid.rows ||
               static_cast<Index>(data.space.size()) != data.grid.cols)
            : static_cast<Index>(data.times.size()) != data.grid.cols) {
    throw DimensionMismatch("dataset axes do not match the grid");
  }
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const lfo::Sample& s = data.samples[k];
    const Index i = data.indices[k];
    if (field) {
      write_field_csv(inst_path(dir, i, "solution.csv"), data.times, data.space, as_field(s.solution, data.grid));
      write_field_csv(inst_path(dir, i, "force.csv"), data.times, data.space, as_field(s.force, data.grid));
    } else {
      write_series_csv(inst_path(dir, i, "solution.csv"), data.times, s.solution.transpose(), "output");
      write_series_csv(inst_path(dir, i, "force.csv"), data.times, s.force.transpose(), "force");
    }
    Json params = Json::object();
    for (std::size_t p = 0; p < data.phi_names.size(); ++p) {
      params[data.phi_names[p]] = s.phi(static_cast<Index>(p));
    }
    write_text(inst_path(dir, i, "params.json"), params.dump(2) + "\n");
  }
  Json m;
  m["model"] = lfm::to_string(data.family);
  m["seed"] = data.seed;
  m["count"] = data.samples.size();
  m["requested"] = requested;
  m["grid"] = {data.grid.rows, data.grid.cols};
  m["channels"] = data.channels;
  m["forces"] = data.forces;
  m["parameters"] = data.phi_names;
  m["times"] = data.times;
  m["space"] = data.space;
  m["instances"] = data.indices;
  Json skips = Json::array();
  for (const lfo::Skip& s : data.skips) skips.push_back({{"index", s.index}, {"reason", s.reason}});
  m["skips"] = skips;
  write_text((fs::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
}

lfo::Dataset read_dataset(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  Json m;
  try {
    m = Json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  lfo::Dataset d;
  try {
    d.family = lfm::parse_family(m.at("model").get<std::string>());
    d.seed = m.at("seed").get<std::uint64_t>();
    d.grid = {m.at("grid").at(0).get<Index>(), m.at("grid").at(1).get<Index>()};
    d.channels = m.at("channels").get<Index>();
    d.forces = m.at("forces").get<Index>();
    d.phi_names = m.at("parameters").get<std::vector<std::string>>();
    d.times = json_doubles(m.at("times"));
    d.space = json_doubles(m.at("space"));
    d.indices = m.at("instances").get<std::vector<Index>>();
    for (const Json& s : m.at("skips")) {
      d.skips.push_back({s.at("index").get<Index>(), s.at("reason").get<std::string>()});
    }
    if (m.at("count").get<std::size_t>() != d.indices.size()) {
      throw IoError(manifest_path + ": count differs from the instance list");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  const bool field = is_field(d);
  for (Index i : d.indices) {
    lfo::Sample s;
    if (field) {
      const Field sol = read_field_csv(inst_path(dir, i, "solution.csv"));
      const Field force = read_field_csv(inst_path(dir, i, "force.csv"));
      if (sol.times != d.times || sol.space != d.space || force.times != d.times || force.space != d.space) {
        throw IoError("instance " + std::to_string(i) + " grid differs from the manifest");
      }
      s.solution = flatten_field(sol.values);
      s.force = flatten_field(force.values);
    } else {
      const Series sol = read_series_csv(inst_path(dir, i, "solution.csv"));
      const Series force = read_series_csv(inst_path(dir, i, "force.csv"));
      if (sol.times != d.times || force.times != d.times || sol.values.cols() != d.channels ||
          force.values.cols() != d.forces) {
        throw IoError("instance " + std::to_string(i) + " shape differs from the manifest");
      }
      s.solution = sol.values.transpose();
      s.force = force.values.transpose();
    }
    Json params;
    try {
      params = Json::parse(read_text(inst_path(dir, i, "params.json")));
      s.phi.resize(static_cast<Index>(d.phi_names.size()));
      for (std::size_t p = 0; p < d.phi_names.size(); ++p) {
        s.phi(static_cast<Index>(p)) = params.at(d.phi_names[p]).get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError("instance " + std::to_string(i) + " parameters: " + e.what());
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

lfm::Observations observations_of(const lfo::Dataset& data, std::size_t position) {
  const lfo::Sample& s = data.samples.at(position);
  lfm::Observations o;
  o.times = data.times;
  if (is_field(data)) {
    o.space = data.space;
    o.values = as_field(s.solution, data.grid);
  } else {
    o.values = s.solution.transpose();
  }
  return o;
}

}  // namespace lft::io
