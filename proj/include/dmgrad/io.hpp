#pragma once

#include "dmgrad/core.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dmgrad::io {

/// Round-trip decimal form of a double; no locale, no timestamps.
inline std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

/// Minimal CSV writer: a header plus rows of already formatted cells.
class CsvWriter
{
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(open_out(path))
  {
    row(header);
  }

  void row(const std::vector<std::string>& cells)
  {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& doc)
{
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

/// Matrix as {"rows", "cols", "data"} with data in row-major order.
inline nlohmann::ordered_json matrix_json(const Matrix& m)
{
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = data;
  return j;
}

/// Points one per row in `path`, optional header line of non-numeric cells.
/// Throws std::invalid_argument naming the first malformed line.
inline Matrix read_points_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": malformed numeric row");
    }
    if (!rows.empty() && cells.size() != rows.front().size())
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(rows.front().size()) + " columns");
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::invalid_argument(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

/// 8-bit binary PGM, scaled so `white` maps to 255 (the image maximum when
/// white <= 0), plus a native-endian float32 sidecar at `path` + ".f32".
inline void write_pgm(const std::filesystem::path& path, const Matrix& pixels, double white = 0.0)
{
  const double top = white > 0.0 ? white : pixels.maxCoeff();
  {
    auto out = open_out(path);
    out << "P5\n" << pixels.cols() << ' ' << pixels.rows() << "\n255\n";
    for (Eigen::Index r = 0; r < pixels.rows(); ++r)
      for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
        const double v = top > 0.0 ? std::clamp(pixels(r, c) / top, 0.0, 1.0) : 0.0;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
      }
  }
  auto raw = open_out(path.string() + ".f32");
  for (Eigen::Index r = 0; r < pixels.rows(); ++r)
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      const float v = static_cast<float>(pixels(r, c));
      raw.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

} // namespace dmgrad::io
