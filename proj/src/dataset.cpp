#include "cotflow/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cotflow/errors.hpp"

namespace cotflow {

double separation(const Dataset& data) {
  if (data.N < 2) throw ConfigError("separation requires at least 2 samples");
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < data.N; ++i) {
    for (int j = i + 1; j < data.N; ++j) {
      double sq = 0.0;
      for (int c = 0; c < data.d; ++c) {
        const double diff = data.x(i)[c] - data.x(j)[c];
        sq += diff * diff;
      }
      best = std::min(best, sq);
    }
  }
  return std::sqrt(best);
}

LiftedProblem lift(const Dataset& base, double alpha) {
  if (alpha <= 0.0) throw ConfigError("lift requires alpha > 0");
  LiftedProblem out;
  out.alpha = alpha;
  out.base_d = base.d;
  out.data.N = base.N;
  out.data.d = base.d + base.d_out;
  out.data.d_out = base.d_out;
  out.data.ys = base.ys;
  out.data.xs.assign(static_cast<std::size_t>(base.N) * out.data.d, 0.0);
  for (int i = 0; i < base.N; ++i)
    for (int c = 0; c < base.d; ++c) out.data.x(i)[c] = base.x(i)[c];
  return out;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && cell[start] == ' ') ++start;
    cells.push_back(cell.substr(start));
  }
  return cells;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("dataset file is empty: " + path);

  const auto header = split_csv_row(line);
  int d = 0;
  int d_out = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    const bool is_x = !name.empty() && name[0] == 'x';
    const bool is_y = !name.empty() && name[0] == 'y';
    if (is_x && d_out == 0) {
      ++d;
    } else if (is_y) {
      ++d_out;
    } else {
      throw ConfigError("dataset header must list x* columns then y* columns; got '" +
                        name + "' in " + path);
    }
  }
  if (d == 0 || d_out == 0)
    throw ConfigError("dataset header needs at least one x and one y column: " + path);

  Dataset data;
  data.d = d;
  data.d_out = d_out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv_row(line);
    if (cells.size() != static_cast<std::size_t>(d + d_out))
      throw ConfigError("dataset row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(d + d_out));
    for (int c = 0; c < d + d_out; ++c) {
      double value = 0.0;
      try {
        value = std::stod(cells[c]);
      } catch (const std::exception&) {
        throw ConfigError("dataset row " + std::to_string(row) +
                          " has a non-numeric cell: '" + cells[c] + "'");
      }
      if (!std::isfinite(value))
        throw ConfigError("dataset row " + std::to_string(row) + " is not finite");
      if (c < d)
        data.xs.push_back(value);
      else
        data.ys.push_back(value);
    }
    ++data.N;
  }
  if (data.N == 0) throw ConfigError("dataset has a header but no rows: " + path);
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset file: " + path);
  out.precision(17);
  for (int c = 0; c < data.d; ++c) out << "x" << c << ",";
  for (int c = 0; c < data.d_out; ++c)
    out << "y" << c << (c + 1 < data.d_out ? "," : "\n");
  for (int i = 0; i < data.N; ++i) {
    for (int c = 0; c < data.d; ++c) out << data.x(i)[c] << ",";
    for (int c = 0; c < data.d_out; ++c)
      out << data.y(i)[c] << (c + 1 < data.d_out ? "," : "\n");
  }
  if (!out) throw ConfigError("failed while writing dataset file: " + path);
}

}  // namespace cotflow
