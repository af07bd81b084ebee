#include "dgpo/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dgpo/errors.hpp"

namespace dgpo::report {
namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string label_text(Condition c) { return c.is_null() ? "null" : std::to_string(c.index()); }

const char* color_of(Condition c) {
  static constexpr const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                            "#911eb4", "#42d4f4", "#f032e6", "#9a6324"};
  if (c.is_null()) return "#808080";
  return kPalette[static_cast<std::size_t>(c.index()) % 8];
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, std::span<const train::MetricsRecord> rows) {
  std::ofstream out = open_out(path);
  out << "# schema=" << kCsvSchema << "\n";
  out << "iteration,mean_reward,sliced_w2,train_loss,degenerate_groups\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << num(r.mean_reward) << ',' << num(r.sliced_w2) << ',' << num(r.train_loss)
        << ',' << r.degenerate_groups << '\n';
  }
}

void write_timing_csv(const std::filesystem::path& path, std::span<const train::MetricsRecord> rows) {
  std::ofstream out = open_out(path);
  out << "# schema=" << kCsvSchema << "\n";
  out << "iteration,wall_seconds\n";
  for (const auto& r : rows) out << r.iteration << ',' << num(r.wall_seconds) << '\n';
}

void write_samples_csv(const std::filesystem::path& path, const Matrix& samples,
                       std::span<const Condition> labels, std::span<const std::uint64_t> seeds) {
  const auto n = static_cast<std::size_t>(samples.rows());
  if (labels.size() != n || seeds.size() != n) throw InputError("write_samples_csv: row count mismatch");
  std::ofstream out = open_out(path);
  out << "# schema=" << kCsvSchema << "\nseed,condition";
  for (Eigen::Index j = 0; j < samples.cols(); ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << seeds[i] << ',' << label_text(labels[i]);
    for (Eigen::Index j = 0; j < samples.cols(); ++j) out << ',' << num(samples(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

SampleDump read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read sample dump " + path.string());
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::size_t width = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      const auto cols = split(line);
      if (cols.size() < 3 || cols[0] != "seed" || cols[1] != "condition") {
        throw InputError(path.string() + ": expected a 'seed,condition,x0,...' header");
      }
      width = cols.size();
      header = true;
      continue;
    }
    auto cells = split(line);
    if (cells.size() != width) throw InputError(path.string() + ": ragged row '" + line + "'");
    rows.push_back(std::move(cells));
  }
  if (!header) throw InputError(path.string() + ": empty sample dump");
  SampleDump dump;
  dump.samples = Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 2));
  try {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      dump.seeds.push_back(std::stoull(rows[i][0]));
      dump.labels.push_back(rows[i][1] == "null" ? Condition::null() : Condition(std::stoi(rows[i][1])));
      for (std::size_t j = 2; j < width; ++j) {
        dump.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 2)) = std::stod(rows[i][j]);
      }
    }
  } catch (const std::logic_error&) {
    throw InputError(path.string() + ": unparsable value in sample dump");
  }
  return dump;
}

void write_trajectory_csv(const std::filesystem::path& path,
                          std::span<const diffusion::RolloutTrajectory> trajectories,
                          std::span<const std::uint64_t> seeds) {
  if (trajectories.size() != seeds.size()) throw InputError("write_trajectory_csv: size mismatch");
  std::ofstream out = open_out(path);
  out << "# schema=" << kCsvSchema << "\n";
  std::size_t dim = 0;
  for (const auto& tr : trajectories) {
    if (!tr.steps.empty()) {
      dim = tr.steps.front().x.size();
      break;
    }
  }
  out << "seed,step,t,dt";
  for (const char* prefix : {"x", "mean", "next"}) {
    for (std::size_t j = 0; j < dim; ++j) out << ',' << prefix << j;
    if (std::string_view(prefix) == "mean") out << ",variance";
  }
  out << '\n';
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    for (std::size_t k = 0; k < trajectories[i].steps.size(); ++k) {
      const auto& s = trajectories[i].steps[k];
      out << seeds[i] << ',' << k << ',' << num(s.t) << ',' << num(s.dt);
      for (double v : s.x) out << ',' << num(v);
      for (double v : s.mean) out << ',' << num(v);
      out << ',' << num(s.variance);
      for (double v : s.x_next) out << ',' << num(v);
      out << '\n';
    }
  }
}

std::pair<double, double> to_pixel(double x, double y) {
  const double scale = kSvgSize / (2.0 * kSvgExtent);
  return {(x + kSvgExtent) * scale, (kSvgExtent - y) * scale};
}

std::string scatter_svg(const Matrix& points, std::span<const Condition> labels,
                        std::span<const std::array<double, 2>> mode_centers) {
  if (points.rows() > 0 && points.cols() != 2) {
    throw InputError("scatter_svg: points must be 2-D, got " + std::to_string(points.cols()) + " columns");
  }
  if (static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw InputError("scatter_svg: one label per point required");
  }
  const std::string size = fixed1(kSvgSize);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\"/>\n";
  const auto [ox, oy] = to_pixel(0.0, 0.0);
  os << "<g class=\"axes\" stroke=\"#bbbbbb\" stroke-width=\"1\">\n";
  os << "<line x1=\"0.0\" y1=\"" << fixed1(oy) << "\" x2=\"" << size << "\" y2=\"" << fixed1(oy) << "\"/>\n";
  os << "<line x1=\"" << fixed1(ox) << "\" y1=\"0.0\" x2=\"" << fixed1(ox) << "\" y2=\"" << size << "\"/>\n";
  os << "</g>\n";
  os << "<g class=\"points\">\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto [px, py] = to_pixel(points(i, 0), points(i, 1));
    os << "<circle cx=\"" << fixed1(px) << "\" cy=\"" << fixed1(py) << "\" r=\"3\" fill=\""
       << color_of(labels[static_cast<std::size_t>(i)]) << "\" data-label=\""
       << label_text(labels[static_cast<std::size_t>(i)]) << "\"/>\n";
  }
  os << "</g>\n";
  os << "<g class=\"modes\" stroke=\"black\" stroke-width=\"2\">\n";
  constexpr double arm = 8.0;
  for (const auto& c : mode_centers) {
    const auto [px, py] = to_pixel(c[0], c[1]);
    os << "<path d=\"M" << fixed1(px - arm) << ' ' << fixed1(py - arm) << " L" << fixed1(px + arm) << ' '
       << fixed1(py + arm) << " M" << fixed1(px - arm) << ' ' << fixed1(py + arm) << " L" << fixed1(px + arm)
       << ' ' << fixed1(py - arm) << "\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

void emit_scatter_svg(const Matrix& points, std::span<const Condition> labels,
                      std::span<const std::array<double, 2>> mode_centers,
                      const std::filesystem::path& path) {
  const std::string svg = scatter_svg(points, labels, mode_centers);
  std::ofstream out = open_out(path);
  out << svg;
}

}  // namespace dgpo::report
