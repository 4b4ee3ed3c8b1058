#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace kuq {

/// Uniform grid of n_bins half-open cells [l, r) tiling [0,1]; the last cell is closed.
class VelocityGrid {
 public:
  explicit VelocityGrid(std::size_t n_bins = 100);

  std::size_t n_bins() const noexcept { return n_bins_; }
  double dv() const noexcept { return 1.0 / static_cast<double>(n_bins_); }
  double center(std::size_t i) const noexcept {
    return (static_cast<double>(i) + 0.5) / static_cast<double>(n_bins_);
  }
  /// Cell index of v in [0,1]; points on an interior edge go to the right cell.
  std::size_t bin_of(double v) const noexcept;

  friend bool operator==(const VelocityGrid&, const VelocityGrid&) = default;

 private:
  std::size_t n_bins_;
};

/// Per-cell kinetic density (probability per unit velocity).
///
/// Reconstructions and grid evaluations integrate to one. Estimator outputs
/// live in the same type but are not guaranteed to be normalized or positive.
struct DensityHistogram {
  VelocityGrid grid;
  std::vector<double> values;

  DensityHistogram() = default;
  explicit DensityHistogram(const VelocityGrid& g) : grid(g), values(g.n_bins(), 0.0) {}
  DensityHistogram(const VelocityGrid& g, std::vector<double> v);

  std::size_t size() const noexcept { return values.size(); }
  double integral() const noexcept;
  /// Sum of center_i f_i dv.
  double mean_velocity() const noexcept;
};

DensityHistogram reconstruct_histogram(std::span<const double> velocities, const VelocityGrid& grid);

/// sqrt(sum f_i^2 dv).
double l2_norm(const DensityHistogram& h);

/// ||estimate - reference|| / ||reference||. Throws on grid mismatch or a zero reference.
double relative_error(const DensityHistogram& estimate, const DensityHistogram& reference);

/// Cell-center evaluation followed by renormalization to unit mass.
DensityHistogram evaluate_on_grid(const std::function<double(double)>& density,
                                  const VelocityGrid& grid);

/// Rescales to unit mass. Throws when the mass is not positive.
DensityHistogram renormalized(DensityHistogram h);

void require_same_grid(const DensityHistogram& a, const DensityHistogram& b);

/// "v,f" header then one "%.12e,%.12e" row per cell center.
void write_histogram_csv(std::ostream& out, const DensityHistogram& h);

}  // namespace kuq
