#pragma once

// Byte-level formats: histograms and matrices as CSV, grayscale images as
// Netpbm PGM (P2/P5), and solver traces as JSON.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gsot/barycenter.hpp"
#include "gsot/core.hpp"
#include "gsot/transport.hpp"

namespace gsot {

enum class GridMetric { SquaredEuclidean, Euclidean };

/// Pixel coordinates are either rescaled to [0, 1] per axis or kept in pixel units.
enum class GridScale { UnitSquare, Pixel };

struct GridSpec {
  Index height = 1;
  Index width = 1;
  GridMetric metric = GridMetric::SquaredEuclidean;
  GridScale scale = GridScale::UnitSquare;

  Index size() const { return height * width; }
};

struct PgmImage {
  Histogram histogram;  // row-major pixel order
  GridSpec grid;
  int maxval = 255;
};

namespace io_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view token, std::size_t line) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": '" + std::string(token) + "' is not a number");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": non-finite value '" + std::string(token) + "'");
  }
  return value;
}

/// Non-empty lines split on commas.
inline std::vector<std::vector<double>> parse_rows(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<double> row;
    while (true) {
      const auto comma = line.find(',');
      row.push_back(parse_number(line.substr(0, comma), line_no));
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace io_detail

/// Shortest round-trip-safe text for a double: 17 significant digits.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidInput, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// One value per line, or a single comma-separated row.
inline Histogram read_histogram_csv(std::string_view text) {
  const auto rows = io_detail::parse_rows(text);
  std::vector<double> values;
  if (rows.size() == 1) {
    values = rows.front();
  } else {
    for (const auto& row : rows) {
      if (row.size() != 1) throw Error(ErrorKind::Parse, "histogram CSV must be one column or one row");
      values.push_back(row.front());
    }
  }
  if (values.empty()) throw Error(ErrorKind::Parse, "empty histogram file");
  return Histogram(values);
}

inline std::string write_histogram_csv(const Vector& values) {
  std::string out;
  for (Index i = 0; i < values.size(); ++i) {
    out += format_number(values[i]);
    out += '\n';
  }
  return out;
}

inline std::string write_histogram_csv(const Histogram& h) { return write_histogram_csv(h.values()); }

inline CostMatrix read_cost_csv(std::string_view text) {
  const auto rows = io_detail::parse_rows(text);
  if (rows.empty()) throw Error(ErrorKind::Parse, "empty cost file");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw Error(ErrorKind::Parse, "ragged cost matrix: row " + std::to_string(i + 1) + " has " +
                                        std::to_string(rows[i].size()) + " entries, expected " +
                                        std::to_string(rows.front().size()));
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return CostMatrix(std::move(m));
}

inline std::string write_matrix_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_number(m(i, j));
    }
    out += '\n';
  }
  return out;
}

/// Decodes a P2 or P5 image. Densities are intensities, or maxval - value
/// when `invert` is set (white = zero mass), normalized to total one.
inline PgmImage read_pgm(std::string_view bytes, bool invert = false) {
  std::size_t pos = 0;
  const auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  const auto next_token = [&]() -> std::string_view {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') ++pos;
    if (start == pos) throw Error(ErrorKind::Parse, "truncated PGM header");
    return bytes.substr(start, pos - start);
  };
  const auto next_int = [&](const char* what) {
    const auto tok = next_token();
    long value = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || value < 0) {
      throw Error(ErrorKind::Parse, std::string("bad PGM ") + what + " '" + std::string(tok) + "'");
    }
    return value;
  };

  const auto magic = next_token();
  if (magic != "P2" && magic != "P5") throw Error(ErrorKind::Parse, "not a PGM file (magic " + std::string(magic) + ")");
  const long width = next_int("width");
  const long height = next_int("height");
  const long maxval = next_int("maxval");
  if (width < 1 || height < 1) throw Error(ErrorKind::Parse, "PGM dimensions must be positive");
  if (maxval < 1 || maxval > 65535) throw Error(ErrorKind::Parse, "PGM maxval must be in [1, 65535]");

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> pixels(count);
  if (magic == "P2") {
    for (std::size_t k = 0; k < count; ++k) {
      const long v = next_int("pixel");
      if (v > maxval) throw Error(ErrorKind::Parse, "pixel value above maxval");
      pixels[k] = static_cast<double>(v);
    }
  } else {
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      throw Error(ErrorKind::Parse, "missing separator before PGM raster");
    }
    ++pos;
    const std::size_t width_bytes = maxval < 256 ? 1 : 2;
    if (bytes.size() - pos < count * width_bytes) throw Error(ErrorKind::Parse, "truncated PGM raster");
    for (std::size_t k = 0; k < count; ++k) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + k * width_bytes);
      const long v = width_bytes == 1 ? p[0] : (static_cast<long>(p[0]) << 8 | p[1]);
      if (v > maxval) throw Error(ErrorKind::Parse, "pixel value above maxval");
      pixels[k] = static_cast<double>(v);
    }
  }
  Vector density(static_cast<Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    density[static_cast<Index>(k)] = invert ? static_cast<double>(maxval) - pixels[k] : pixels[k];
  }
  const double total = density.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::InvalidInput, "PGM image has zero total intensity");
  PgmImage img{Histogram(Vector(density / total)), GridSpec{}, static_cast<int>(maxval)};
  img.grid.height = height;
  img.grid.width = width;
  return img;
}

/// Encodes mass as an ASCII (P2) image: the heaviest pixel maps to maxval,
/// values are rounded half-to-even.
inline std::string write_pgm(const Vector& mass, const GridSpec& grid, int maxval = 255, bool invert = false) {
  if (mass.size() != grid.size()) throw Error(ErrorKind::InvalidInput, "image size does not match grid");
  if (maxval < 1 || maxval > 65535) throw Error(ErrorKind::InvalidInput, "maxval must be in [1, 65535]");
  const double peak = mass.maxCoeff();
  std::string out = "P2\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n" +
                    std::to_string(maxval) + "\n";
  for (Index r = 0; r < grid.height; ++r) {
    for (Index c = 0; c < grid.width; ++c) {
      const double x = peak > 0.0 ? std::max(mass[r * grid.width + c], 0.0) / peak : 0.0;
      long level = std::lrint(x * maxval);  // default rounding mode: ties to even
      if (invert) level = maxval - level;
      if (c) out += ' ';
      out += std::to_string(level);
    }
    out += '\n';
  }
  return out;
}

/// Pairwise (squared) Euclidean distances between pixel centres, row-major.
inline CostMatrix grid_cost(const GridSpec& grid) {
  if (grid.height < 1 || grid.width < 1) throw Error(ErrorKind::InvalidInput, "grid dimensions must be positive");
  const Index n = grid.size();
  const auto axis = [&](Index k, Index len) {
    if (grid.scale == GridScale::Pixel) return static_cast<double>(k);
    return len > 1 ? static_cast<double>(k) / static_cast<double>(len - 1) : 0.0;
  };
  Matrix c(n, n);
  for (Index a = 0; a < n; ++a) {
    const double ya = axis(a / grid.width, grid.height), xa = axis(a % grid.width, grid.width);
    for (Index b = 0; b < n; ++b) {
      const double yb = axis(b / grid.width, grid.height), xb = axis(b % grid.width, grid.width);
      const double d2 = (ya - yb) * (ya - yb) + (xa - xb) * (xa - xb);
      c(a, b) = grid.metric == GridMetric::SquaredEuclidean ? d2 : std::sqrt(d2);
    }
  }
  return CostMatrix(std::move(c));
}

namespace io_detail {

inline std::string json_number(double x) { return std::isfinite(x) ? format_number(x) : "null"; }

}  // namespace io_detail

/// JSON array with one object per record: iter, row_err, col_err, primal,
/// dual (null when unavailable), theta_res.
inline std::string write_trace_json(std::span<const TraceRecord> trace) {
  std::string out = "[";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& r = trace[k];
    if (k) out += ",\n";
    out += "{\"iter\":" + std::to_string(r.iter) + ",\"row_err\":" + io_detail::json_number(r.row_err) +
           ",\"col_err\":" + io_detail::json_number(r.col_err) + ",\"primal\":" + io_detail::json_number(r.primal) +
           ",\"dual\":" + (r.dual ? io_detail::json_number(*r.dual) : std::string("null")) +
           ",\"theta_res\":" + io_detail::json_number(r.theta_res) + "}";
  }
  out += "]";
  return out;
}

inline std::string write_barycenter_trace_json(std::span<const BarycenterRecord> trace) {
  std::string out = "[";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& r = trace[k];
    if (k) out += ",\n";
    out += "{\"iter\":" + std::to_string(r.iter) + ",\"row_err\":" + io_detail::json_number(r.row_err) +
           ",\"consensus_err\":" + io_detail::json_number(r.consensus_err) +
           ",\"beta_residual\":" + io_detail::json_number(r.beta_residual) +
           ",\"fallbacks\":" + std::to_string(r.fallbacks) + "}";
  }
  out += "]";
  return out;
}

}  // namespace gsot
