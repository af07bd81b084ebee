#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dgpo/metrics.hpp"
#include "dgpo/sampler.hpp"

namespace dgpo::report {

using nn::Condition;
using nn::Matrix;

inline constexpr int kCsvSchema = 1;

/// `# schema=1` header line followed by the MetricsRecord columns except
/// wall-clock time (see write_timing_csv).
void write_metrics_csv(const std::filesystem::path& path, std::span<const train::MetricsRecord> rows);
void write_timing_csv(const std::filesystem::path& path, std::span<const train::MetricsRecord> rows);

/// Rows (seed, condition, x0, x1, ...).
void write_samples_csv(const std::filesystem::path& path, const Matrix& samples,
                       std::span<const Condition> labels, std::span<const std::uint64_t> seeds);

struct SampleDump {
  Matrix samples;
  std::vector<Condition> labels;
  std::vector<std::uint64_t> seeds;
};
SampleDump read_samples_csv(const std::filesystem::path& path);

/// Rows (seed, step, t, x..., mean..., variance).
void write_trajectory_csv(const std::filesystem::path& path,
                          std::span<const diffusion::RolloutTrajectory> trajectories,
                          std::span<const std::uint64_t> seeds);

inline constexpr double kSvgSize = 800.0;
inline constexpr double kSvgExtent = 1.6;

/// Pixel position of a data point in the fixed [-1.6, 1.6]² window (y up).
std::pair<double, double> to_pixel(double x, double y);

/// Standalone 800×800 scatter: one circle per point coloured by label, axes,
/// and a cross on each mode centre. Rejects non-2-D input.
std::string scatter_svg(const Matrix& points, std::span<const Condition> labels,
                        std::span<const std::array<double, 2>> mode_centers);
void emit_scatter_svg(const Matrix& points, std::span<const Condition> labels,
                      std::span<const std::array<double, 2>> mode_centers,
                      const std::filesystem::path& path);

}  // namespace dgpo::report
