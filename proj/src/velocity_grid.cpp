#include "kuq/velocity_grid.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace kuq {

VelocityGrid::VelocityGrid(std::size_t n_bins) : n_bins_(n_bins) {
  if (n_bins == 0) throw std::invalid_argument("velocity grid needs at least one bin");
}

std::size_t VelocityGrid::bin_of(double v) const noexcept {
  const double scaled = v * static_cast<double>(n_bins_);
  if (!(scaled > 0.0)) return 0;
  const auto i = static_cast<std::size_t>(scaled);
  return i < n_bins_ ? i : n_bins_ - 1;
}

DensityHistogram::DensityHistogram(const VelocityGrid& g, std::vector<double> v)
    : grid(g), values(std::move(v)) {
  if (values.size() != grid.n_bins()) throw std::invalid_argument("histogram size does not match grid");
}

double DensityHistogram::integral() const noexcept {
  double s = 0.0;
  for (double f : values) s += f;
  return s * grid.dv();
}

double DensityHistogram::mean_velocity() const noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += grid.center(i) * values[i];
  return s * grid.dv();
}

DensityHistogram reconstruct_histogram(std::span<const double> velocities, const VelocityGrid& grid) {
  if (velocities.empty()) throw std::invalid_argument("cannot reconstruct an empty ensemble");
  std::vector<std::size_t> counts(grid.n_bins(), 0);
  for (double v : velocities) ++counts[grid.bin_of(v)];
  const double scale = 1.0 / (static_cast<double>(velocities.size()) * grid.dv());
  DensityHistogram h(grid);
  for (std::size_t i = 0; i < counts.size(); ++i) h.values[i] = static_cast<double>(counts[i]) * scale;
  return h;
}

double l2_norm(const DensityHistogram& h) {
  double s = 0.0;
  for (double f : h.values) s += f * f;
  return std::sqrt(s * h.grid.dv());
}

void require_same_grid(const DensityHistogram& a, const DensityHistogram& b) {
  if (!(a.grid == b.grid) || a.values.size() != b.values.size()) {
    throw std::invalid_argument("histograms live on different velocity grids");
  }
}

double relative_error(const DensityHistogram& estimate, const DensityHistogram& reference) {
  require_same_grid(estimate, reference);
  const double ref_norm = l2_norm(reference);
  if (!(ref_norm > 0.0)) throw std::invalid_argument("reference histogram has zero norm");
  DensityHistogram diff(reference.grid);
  for (std::size_t i = 0; i < diff.values.size(); ++i) {
    diff.values[i] = estimate.values[i] - reference.values[i];
  }
  return l2_norm(diff) / ref_norm;
}

DensityHistogram renormalized(DensityHistogram h) {
  const double mass = h.integral();
  if (!(mass > 0.0) || !std::isfinite(mass)) throw std::invalid_argument("cannot renormalize: mass not positive");
  for (double& f : h.values) f /= mass;
  return h;
}

DensityHistogram evaluate_on_grid(const std::function<double(double)>& density,
                                  const VelocityGrid& grid) {
  DensityHistogram h(grid);
  for (std::size_t i = 0; i < grid.n_bins(); ++i) {
    const double f = density(grid.center(i));
    if (!std::isfinite(f)) throw std::domain_error("density is not finite at a cell center");
    h.values[i] = f;
  }
  return renormalized(std::move(h));
}

void write_histogram_csv(std::ostream& out, const DensityHistogram& h) {
  out << "v,f\n";
  char line[64];
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    std::snprintf(line, sizeof line, "%.12e,%.12e\n", h.grid.center(i), h.values[i]);
    out << line;
  }
}

}  // namespace kuq
