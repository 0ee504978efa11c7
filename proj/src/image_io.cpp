#include "lastomo/image_io.hpp"

#include "lastomo/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <system_error>

namespace lastomo {

namespace fs = std::filesystem;

Image vector_to_image(const Eigen::VectorXd& t, const SensingMesh& mesh) {
  if (t.size() != mesh.n_cells()) {
    throw DimensionError("hierarchical vector has " + std::to_string(t.size()) +
                         " entries, mesh has " + std::to_string(mesh.n_cells()) + " cells");
  }
  const int n = mesh.fine_dim();
  Image img = Image::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int j = mesh.pixel_owner(r, c);
      if (j >= 0) img(r, c) = t(j);
    }
  }
  return img;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& raw) {
  std::size_t b = raw.find_first_not_of(" \t\r");
  std::size_t e = raw.find_last_not_of(" \t\r");
  if (b == std::string::npos) throw FormatError("empty numeric field");
  const std::string s = raw.substr(b, e - b + 1);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + s + "'");
  }
  return v;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::random_device rd;
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw IoError("write failed for '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string image_to_pgm(const Image& image) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index k = 0; k < image.size(); ++k) {
    const double v = image.data()[k];
    if (v == 0.0 || !std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) +
                    "\n255\n";
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double v = image(r, c);
      int g = 0;
      if (v != 0.0 && std::isfinite(v)) {
        g = hi > lo ? static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo))) : 255;
      }
      out.push_back(static_cast<char>(static_cast<unsigned char>(g)));
    }
  }
  return out;
}

std::string image_to_csv(const Image& image) {
  std::string out;
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      if (c) out.push_back(',');
      out += format_double(image(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<std::vector<double>> parse_numeric_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      try {
        row.push_back(parse_double(field));
      } catch (const FormatError& e) {
        throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Image image_from_csv(const std::string& text) {
  const auto rows = parse_numeric_csv(text);
  if (rows.empty()) throw FormatError("image CSV is empty");
  Image img(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw FormatError("image CSV row " + std::to_string(r + 1) + " has " +
                        std::to_string(rows[r].size()) + " columns, expected " +
                        std::to_string(rows[0].size()));
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) img(r, c) = rows[r][c];
  }
  return img;
}

void export_pgm(const Image& image, const fs::path& path) { write_file_atomic(path, image_to_pgm(image)); }
void export_csv(const Image& image, const fs::path& path) { write_file_atomic(path, image_to_csv(image)); }

std::vector<std::array<Eigen::VectorXd, 2>> parse_measurements_csv(const std::string& text,
                                                                     int n_beams) {
  const auto rows = parse_numeric_csv(text);
  std::vector<std::array<Eigen::VectorXd, 2>> frames;
  frames.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (static_cast<int>(rows[k].size()) != 2 * n_beams) {
      throw FormatError("measurement frame " + std::to_string(k + 1) + " has " +
                        std::to_string(rows[k].size()) + " values, expected " +
                        std::to_string(2 * n_beams));
    }
    std::array<Eigen::VectorXd, 2> f{Eigen::VectorXd(n_beams), Eigen::VectorXd(n_beams)};
    for (int i = 0; i < n_beams; ++i) {
      f[0](i) = rows[k][i];
      f[1](i) = rows[k][n_beams + i];
    }
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw FormatError("no measurement frames found");
  return frames;
}

}  // namespace lastomo
