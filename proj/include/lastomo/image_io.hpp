#pragma once

#include "lastomo/geometry.hpp"
#include "lastomo/phantom.hpp"

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace lastomo {

// Hierarchical vector -> fine image. RoI cells fill the central block, each
// background cell is duplicated over its patch, exterior pixels are 0.
Image vector_to_image(const Eigen::VectorXd& t, const SensingMesh& mesh);

// Shortest decimal form that parses back to the same double. inf/nan spelled
// "inf", "-inf", "nan".
std::string format_double(double v);
double parse_double(const std::string& s);

// Writes bytes to a temporary sibling, then renames over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// 8-bit binary graymap. Nonzero pixels are scaled from [min, max] over the
// nonzero set to [0, 255]; zero pixels stay 0. A constant set maps to 255.
std::string image_to_pgm(const Image& image);
std::string image_to_csv(const Image& image);
Image image_from_csv(const std::string& text);

void export_pgm(const Image& image, const std::filesystem::path& path);
void export_csv(const Image& image, const std::filesystem::path& path);

// One frame per line: n_beams values for transition 1, then n_beams for
// transition 2. Blank lines and lines starting with '#' are skipped.
std::vector<std::array<Eigen::VectorXd, 2>> parse_measurements_csv(const std::string& text,
                                                                     int n_beams = 32);

// Comma-separated table of plain numbers.
std::vector<std::vector<double>> parse_numeric_csv(const std::string& text);

}  // namespace lastomo
