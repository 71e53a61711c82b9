#include "upanets/landscape/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "upanets/errors.hpp"
#include "upanets/kernels/parallel.hpp"

namespace upanets::landscape {

namespace {

template <typename T>
void check_direction(const Direction<T>& d, std::span<const nn::NamedTensor<T>> params) {
  if (d.tensors.size() != params.size()) throw DimensionError("direction does not match the probe's parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (d.tensors[k].shape() != params[k].tensor.shape()) {
      throw DimensionError("direction tensor for " + params[k].name + " has shape " + d.tensors[k].shape().str() +
                           ", expected " + params[k].tensor.shape().str());
    }
  }
}

template <typename T>
Evaluation evaluate_cell(Probe<T>& probe, const std::vector<std::vector<T>>& base, const Direction<T>& delta,
                         const Direction<T>& eta, double alpha, double beta) {
  auto params = probe.parameters();
  const T a = static_cast<T>(alpha);
  const T b = static_cast<T>(beta);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto out = params[k].tensor.values();
    auto d = delta.tensors[k].values();
    auto e = eta.tensors[k].values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = base[k][i] + a * d[i] + b * e[i];
  }
  try {
    return probe.evaluate();
  } catch (const NumericError&) {
    return {std::numeric_limits<double>::quiet_NaN(), 1.0};
  }
}

}  // namespace

template <typename T>
void filter_normalize(Direction<T>& direction, std::span<const nn::NamedTensor<T>> params) {
  check_direction(direction, params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k].tensor;
    const Index slices = p.rank() == 4 ? p.dim(0) : 1;
    const Index len = p.numel() / slices;
    auto theta = p.values();
    auto d = direction.tensors[k].values();
    for (Index s = 0; s < slices; ++s) {
      double theta_sq = 0.0;
      double d_sq = 0.0;
      for (Index i = s * len; i < (s + 1) * len; ++i) {
        theta_sq += static_cast<double>(theta[i]) * theta[i];
        d_sq += static_cast<double>(d[i]) * d[i];
      }
      const double factor = (theta_sq == 0.0 || d_sq == 0.0) ? 0.0 : std::sqrt(theta_sq) / std::sqrt(d_sq);
      for (Index i = s * len; i < (s + 1) * len; ++i) d[i] = static_cast<T>(d[i] * factor);
    }
  }
}

template <typename T>
std::pair<Direction<T>, Direction<T>> make_directions(Probe<T>& probe, std::uint64_t seed) {
  const auto params = probe.parameters();
  std::pair<Direction<T>, Direction<T>> out;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6c616e64U};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Direction<T>* d : {&out.first, &out.second}) {
    d->seed = seed;
    for (const auto& p : params) {
      BasicTensor<T> t(p.tensor.shape());
      for (auto& v : t.values()) v = static_cast<T>(normal(rng));
      d->tensors.push_back(std::move(t));
    }
    filter_normalize<T>(*d, params);
  }
  return out;
}

std::vector<double> grid_coordinates(double range, Index steps) {
  if (steps < 2) throw ConfigError("landscape grids need at least 2 steps per axis, got " + std::to_string(steps));
  if (!(range >= 0.0) || !std::isfinite(range)) throw ConfigError("landscape range must be finite and >= 0");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (Index i = 0; i < steps; ++i) {
    out.push_back(range * static_cast<double>(2 * i - (steps - 1)) / static_cast<double>(steps - 1));
  }
  return out;
}

template <typename T>
LandscapeGrid sample_grid(Probe<T>& probe, const Direction<T>& delta, const Direction<T>& eta, double range,
                          Index steps) {
  LandscapeGrid grid;
  grid.alphas = grid_coordinates(range, steps);
  grid.betas = grid.alphas;
  grid.range = range;
  grid.steps = steps;
  const Index cells = steps * steps;
  grid.loss.assign(static_cast<std::size_t>(cells), 0.0);
  grid.top1_error.assign(static_cast<std::size_t>(cells), 0.0);

  auto params = probe.parameters();
  check_direction(delta, std::span<const nn::NamedTensor<T>>(params));
  check_direction(eta, std::span<const nn::NamedTensor<T>>(params));
  std::vector<std::vector<T>> base;
  for (const auto& p : params) base.emplace_back(p.tensor.values().begin(), p.tensor.values().end());

  const Index workers = std::max<Index>(1, std::min<Index>(kernels::max_threads(), cells));
  std::vector<std::unique_ptr<Probe<T>>> clones;
  for (Index w = 1; w < workers; ++w) clones.push_back(probe.clone());

  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run_worker = [&](Index w) {
    Probe<T>& target = w == 0 ? probe : *clones[static_cast<std::size_t>(w - 1)];
    try {
      for (Index c = w; c < cells; c += workers) {
        const Evaluation e = evaluate_cell(target, base, delta, eta, grid.alphas[c / steps], grid.betas[c % steps]);
        grid.loss[c] = e.loss;
        grid.top1_error[c] = e.top1_error;
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
#if defined(_OPENMP)
#pragma omp parallel num_threads(static_cast<int>(workers))
  run_worker(omp_get_thread_num());
#else
  run_worker(0);
#endif

  for (std::size_t k = 0; k < params.size(); ++k) {
    std::copy(base[k].begin(), base[k].end(), params[k].tensor.values().begin());
  }
  if (failure) std::rethrow_exception(failure);
  grid.nonfinite_count = std::count_if(grid.loss.begin(), grid.loss.end(), [](double v) { return !std::isfinite(v); });
  return grid;
}

std::vector<double> minmax_scale(std::span<const double> values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) throw NumericError("min-max scaling: grid has no finite value");
  std::vector<double> out(values.size(), 0.0);
  if (hi == lo) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? values[i] : hi;
    out[i] = (v - lo) / (hi - lo);
  }
  return out;
}

LandscapeGrid minmax_scale(const LandscapeGrid& grid) {
  LandscapeGrid out = grid;
  out.loss = minmax_scale(grid.loss);
  out.top1_error = minmax_scale(grid.top1_error);
  out.scaled = true;
  return out;
}

template <typename T>
RangeChoice find_visualizable_range(Probe<T>& probe, const Direction<T>& delta, const Direction<T>& eta,
                                    std::span<const double> candidates) {
  if (candidates.empty()) throw ConfigError("range search needs at least one candidate");
  if (!std::is_sorted(candidates.begin(), candidates.end(), std::greater<>())) {
    throw ConfigError("range candidates must be sorted in descending order");
  }
  for (double r : candidates) {
    if (sample_grid(probe, delta, eta, r, kRangeProbeSteps).nonfinite_count == 0) return {r, false};
  }
  return {candidates.back(), true};
}

template <typename T>
RangeChoice find_visualizable_range(Probe<T>& probe, std::span<const double> candidates, std::uint64_t seed) {
  auto [delta, eta] = make_directions(probe, seed);
  return find_visualizable_range(probe, delta, eta, candidates);
}

void write_grid_csv(std::ostream& out, const LandscapeGrid& raw) {
  const auto scaled = minmax_scale(raw);
  const auto old_precision = out.precision(17);
  out << "alpha,beta,loss,top1_error,scaled_loss,scaled_top1\n";
  for (Index i = 0; i < raw.steps; ++i) {
    for (Index j = 0; j < raw.steps; ++j) {
      const auto c = static_cast<std::size_t>(i * raw.steps + j);
      out << raw.alphas[i] << ',' << raw.betas[j] << ',' << raw.loss[c] << ',' << raw.top1_error[c] << ','
          << scaled.loss[c] << ',' << scaled.top1_error[c] << '\n';
    }
  }
  out.precision(old_precision);
}

#define UPANETS_LANDSCAPE(T)                                                                                    \
  template void filter_normalize<T>(Direction<T>&, std::span<const nn::NamedTensor<T>>);                     \
  template std::pair<Direction<T>, Direction<T>> make_directions<T>(Probe<T>&, std::uint64_t);                 \
  template LandscapeGrid sample_grid<T>(Probe<T>&, const Direction<T>&, const Direction<T>&, double, Index);   \
  template RangeChoice find_visualizable_range<T>(Probe<T>&, const Direction<T>&, const Direction<T>&,         \
                                                  std::span<const double>);                                    \
  template RangeChoice find_visualizable_range<T>(Probe<T>&, std::span<const double>, std::uint64_t);

UPANETS_LANDSCAPE(float)
UPANETS_LANDSCAPE(double)

#undef UPANETS_LANDSCAPE

}  // namespace upanets::landscape
