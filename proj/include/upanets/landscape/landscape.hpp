#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "upanets/nn/module.hpp"

namespace upanets::landscape {

struct Evaluation {
  double loss = 0.0;
  double top1_error = 0.0;
};

/// Something whose loss can be evaluated at perturbed parameters. The tensors
/// returned by parameters() alias the probe's live storage.
template <typename T>
class Probe {
 public:
  virtual ~Probe() = default;
  virtual std::vector<nn::NamedTensor<T>> parameters() = 0;
  virtual Evaluation evaluate() = 0;
  /// Independent copy for parallel cell evaluation.
  [[nodiscard]] virtual std::unique_ptr<Probe> clone() const = 0;
};

/// One perturbation tensor per probe parameter, in parameter order.
template <typename T>
struct Direction {
  std::vector<BasicTensor<T>> tensors;
  std::uint64_t seed = 0;
};

/// Rescales each slice of `direction` to the norm of the matching parameter
/// slice. Rank-4 tensors are sliced per output filter (dim 0); every other
/// tensor is one slice. Zero-norm parameter slices give zero direction slices.
template <typename T>
void filter_normalize(Direction<T>& direction, std::span<const nn::NamedTensor<T>> params);

/// Two independent standard-normal directions, filter-normalized.
template <typename T>
std::pair<Direction<T>, Direction<T>> make_directions(Probe<T>& probe, std::uint64_t seed);

/// steps x steps cells over [-r, r]^2; cell (i, j) is at (alphas[i], betas[j]).
struct LandscapeGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> loss;        // row-major [alpha][beta]
  std::vector<double> top1_error;  // row-major [alpha][beta]
  double range = 0.0;
  Index steps = 0;
  Index nonfinite_count = 0;
  bool scaled = false;

  [[nodiscard]] double loss_at(Index i, Index j) const { return loss[static_cast<std::size_t>(i * steps + j)]; }
};

/// Symmetric coordinates r * (2i - (steps - 1)) / (steps - 1); odd step counts hit 0 exactly.
std::vector<double> grid_coordinates(double range, Index steps);

/// Evaluates theta + alpha * delta + beta * eta at every cell, in parallel on
/// probe clones. Non-finite losses are recorded and counted. The probe's
/// parameters are restored bit-exactly afterwards.
template <typename T>
LandscapeGrid sample_grid(Probe<T>& probe, const Direction<T>& delta, const Direction<T>& eta, double range,
                          Index steps);

/// (x - min) / (max - min) after replacing non-finite values with the finite
/// maximum; constant input maps to zeros. Throws NumericError when nothing is finite.
std::vector<double> minmax_scale(std::span<const double> values);
/// Loss and top-1 error scaled independently.
LandscapeGrid minmax_scale(const LandscapeGrid& grid);

struct RangeChoice {
  double range = 0.0;
  bool fallback = false;  // no candidate gave a finite probe grid
};

inline constexpr Index kRangeProbeSteps = 5;

/// Largest candidate (sorted descending) whose 5 x 5 probe grid is finite;
/// otherwise the smallest candidate with fallback set.
template <typename T>
RangeChoice find_visualizable_range(Probe<T>& probe, const Direction<T>& delta, const Direction<T>& eta,
                                    std::span<const double> candidates);
template <typename T>
RangeChoice find_visualizable_range(Probe<T>& probe, std::span<const double> candidates, std::uint64_t seed);

/// Header "alpha,beta,loss,top1_error,scaled_loss,scaled_top1", one row per cell.
void write_grid_csv(std::ostream& out, const LandscapeGrid& raw);

}  // namespace upanets::landscape
