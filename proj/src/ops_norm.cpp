#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "op_support.hpp"
#include "upanets/kernels/parallel.hpp"
#include "upanets/ops.hpp"

namespace upanets::ops {

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                           BatchNormStats<T>& stats, Mode mode, double eps, double momentum) {
  detail::require(input.rank() == 4, "batchnorm2d input must be N x C x H x W, got " + input.shape().str());
  const Index n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  detail::require(gamma.numel() == c && beta.numel() == c,
                  "batchnorm2d gamma/beta need " + std::to_string(c) + " entries");
  detail::require(stats.running_mean.numel() == c && stats.running_var.numel() == c,
                  "batchnorm2d running statistics need " + std::to_string(c) + " entries");
  const bool training = mode == Mode::Train;
  if (!training && !stats.initialized()) {
    throw StateError("batchnorm2d evaluated before any training step initialized running statistics");
  }
  const Index count = n * hw;
  const T* x = input.data();
  const T* gm = gamma.data();
  const T* bt = beta.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * hw));
  std::vector<T> center(static_cast<std::size_t>(c));
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  std::vector<T> batch_var(static_cast<std::size_t>(c));

  kernels::parallel_for(0, c, [&](Index ch) {
    if (training) {
      T acc{0};
      for (Index s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) acc += p[i];
      }
      const T mu = acc / static_cast<T>(count);
      T sq{0};
      for (Index s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      center[ch] = mu;
      batch_var[ch] = sq / static_cast<T>(count);
      inv_std[ch] = T{1} / std::sqrt(batch_var[ch] + static_cast<T>(eps));
    } else {
      center[ch] = stats.running_mean.data()[ch];
      inv_std[ch] = T{1} / std::sqrt(stats.running_var.data()[ch] + static_cast<T>(eps));
    }
    const T scale = gm[ch] * inv_std[ch];
    const T shift = bt[ch] - center[ch] * scale;
    for (Index s = 0; s < n; ++s) {
      const T* p = x + (s * c + ch) * hw;
      T* o = out.data() + (s * c + ch) * hw;
      for (Index i = 0; i < hw; ++i) o[i] = p[i] * scale + shift;
    }
  });

  if (training) {
    const T m = static_cast<T>(momentum);
    T* rm = stats.running_mean.data();
    T* rv = stats.running_var.data();
    const T unbias = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T{1};
    for (Index ch = 0; ch < c; ++ch) {
      rm[ch] = (T{1} - m) * rm[ch] + m * center[ch];
      rv[ch] = (T{1} - m) * rv[ch] + m * batch_var[ch] * unbias;
    }
    stats.tracked.data()[0] += T{1};
  }

  auto backward = [=, xs = input.storage(), gs = gamma.storage(), center = std::move(center),
                   inv_std = std::move(inv_std)](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    T* dgamma = detail::grad_of(ins, 1);
    T* dbeta = detail::grad_of(ins, 2);
    const T* xv = xs->data();
    const T* gmv = gs->data();
    kernels::parallel_for(0, c, [&](Index ch) {
      T sum_g{0};
      T sum_gx{0};
      for (Index s = 0; s < n; ++s) {
        const T* p = xv + (s * c + ch) * hw;
        const T* go = g.data() + (s * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) {
          sum_g += go[i];
          sum_gx += go[i] * (p[i] - center[ch]) * inv_std[ch];
        }
      }
      if (dgamma) dgamma[ch] += sum_gx;
      if (dbeta) dbeta[ch] += sum_g;
      if (!dx) return;
      const T k = gmv[ch] * inv_std[ch];
      const T inv_count = T{1} / static_cast<T>(count);
      for (Index s = 0; s < n; ++s) {
        const T* p = xv + (s * c + ch) * hw;
        const T* go = g.data() + (s * c + ch) * hw;
        T* d = dx + (s * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) {
          if (training) {
            const T xhat = (p[i] - center[ch]) * inv_std[ch];
            d[i] += k * (go[i] - inv_count * sum_g - xhat * inv_count * sum_gx);
          } else {
            d[i] += k * go[i];
          }
        }
      }
    });
  };
  return detail::make_result<T>("batchnorm2d", input.shape(), std::move(out), {&input, &gamma, &beta},
                                std::move(backward));
}

template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& input, const BasicTensor<T>* gamma, const BasicTensor<T>* beta,
                         std::size_t normalized_rank, double eps) {
  detail::require(normalized_rank >= 1 && normalized_rank <= input.rank(),
                  "layernorm cannot normalize " + std::to_string(normalized_rank) + " trailing extents of " +
                      input.shape().str());
  const std::size_t first = input.rank() - normalized_rank;
  const Index width = input.shape().trailing(first);
  const Index rows = input.numel() / width;
  const auto trailing = input.shape().dims().subspan(first);
  for (const BasicTensor<T>* affine : {gamma, beta}) {
    if (!affine) continue;
    const auto dims = affine->shape().dims();
    detail::require(std::equal(dims.begin(), dims.end(), trailing.begin(), trailing.end()),
                    "layernorm affine parameter " + affine->shape().str() + " does not match normalized extents of " +
                        input.shape().str());
  }
  const T* x = input.data();
  const T* gm = gamma ? gamma->data() : nullptr;
  const T* bt = beta ? beta->data() : nullptr;
  std::vector<T> out(static_cast<std::size_t>(input.numel()));
  std::vector<T> center(static_cast<std::size_t>(rows));
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  kernels::parallel_for(0, rows, [&](Index r) {
    const T* p = x + r * width;
    T acc{0};
    for (Index i = 0; i < width; ++i) acc += p[i];
    const T mu = acc / static_cast<T>(width);
    T sq{0};
    for (Index i = 0; i < width; ++i) sq += (p[i] - mu) * (p[i] - mu);
    const T is = T{1} / std::sqrt(sq / static_cast<T>(width) + static_cast<T>(eps));
    center[r] = mu;
    inv_std[r] = is;
    T* o = out.data() + r * width;
    for (Index i = 0; i < width; ++i) {
      const T xhat = (p[i] - mu) * is;
      o[i] = (gm ? gm[i] * xhat : xhat) + (bt ? bt[i] : T{0});
    }
  });

  auto backward = [=, xs = input.storage(), gs = gamma ? gamma->storage() : nullptr, center = std::move(center),
                   inv_std = std::move(inv_std)](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    T* dgamma = ins.size() > 1 && gs ? detail::grad_of(ins, 1) : nullptr;
    T* dbeta = nullptr;
    if (bt) dbeta = detail::grad_of(ins, ins.size() - 1);
    const T* xv = xs->data();
    const T* gmv = gs ? gs->data() : nullptr;
    // Affine gradients reduce over rows; keep that serial for a fixed summation order.
    if (dgamma || dbeta) {
      for (Index r = 0; r < rows; ++r) {
        const T* p = xv + r * width;
        const T* go = g.data() + r * width;
        for (Index i = 0; i < width; ++i) {
          if (dgamma) dgamma[i] += go[i] * (p[i] - center[r]) * inv_std[r];
          if (dbeta) dbeta[i] += go[i];
        }
      }
    }
    if (!dx) return;
    kernels::parallel_for(0, rows, [&](Index r) {
      const T* p = xv + r * width;
      const T* go = g.data() + r * width;
      T sum_g{0};
      T sum_gx{0};
      for (Index i = 0; i < width; ++i) {
        const T gh = gmv ? go[i] * gmv[i] : go[i];
        sum_g += gh;
        sum_gx += gh * (p[i] - center[r]) * inv_std[r];
      }
      const T inv_w = T{1} / static_cast<T>(width);
      T* d = dx + r * width;
      for (Index i = 0; i < width; ++i) {
        const T gh = gmv ? go[i] * gmv[i] : go[i];
        const T xhat = (p[i] - center[r]) * inv_std[r];
        d[i] += inv_std[r] * (gh - inv_w * sum_g - xhat * inv_w * sum_gx);
      }
    });
  };
  std::vector<const BasicTensor<T>*> inputs{&input};
  if (gamma) inputs.push_back(gamma);
  if (beta) inputs.push_back(beta);
  return detail::make_result<T>("layernorm", input.shape(), std::move(out), inputs, std::move(backward));
}

template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  detail::require(logits.rank() == 2, "softmax_cross_entropy logits must be N x K, got " + logits.shape().str());
  const Index n = logits.dim(0), k = logits.dim(1);
  detail::require(static_cast<Index>(labels.size()) == n,
                  "softmax_cross_entropy got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                      " rows");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw InputError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " outside [0, " +
                       std::to_string(k) + ")");
    }
  }
  const T* z = logits.data();
  std::vector<T> probs(static_cast<std::size_t>(n * k));
  T total{0};
  for (Index r = 0; r < n; ++r) {
    const T* row = z + r * k;
    const T peak = *std::max_element(row, row + k);
    T denom{0};
    for (Index j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(row[j] - peak);
      denom += probs[r * k + j];
    }
    for (Index j = 0; j < k; ++j) probs[r * k + j] /= denom;
    total += std::log(denom) + peak - row[labels[r]];
  }
  const T loss = total / static_cast<T>(n);
  std::vector<int> owned(labels.begin(), labels.end());
  auto backward = [=, probs = std::move(probs), owned = std::move(owned)](std::span<const T> g,
                                                                         const detail::NodeList<T>& ins) {
    T* dz = detail::grad_of(ins, 0);
    const T factor = g[0] / static_cast<T>(n);
    for (Index r = 0; r < n; ++r) {
      for (Index j = 0; j < k; ++j) {
        const T target = j == owned[r] ? T{1} : T{0};
        dz[r * k + j] += factor * (probs[r * k + j] - target);
      }
    }
  };
  return detail::make_result<T>("softmax_cross_entropy", Shape{1}, std::vector<T>{loss}, {&logits},
                                std::move(backward));
}

#define UPANETS_INSTANTIATE(T)                                                                                   \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,        \
                                      BatchNormStats<T>&, Mode, double, double);                                  \
  template BasicTensor<T> layernorm(const BasicTensor<T>&, const BasicTensor<T>*, const BasicTensor<T>*,          \
                                    std::size_t, double);                                                         \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);

UPANETS_INSTANTIATE(float)
UPANETS_INSTANTIATE(double)
#undef UPANETS_INSTANTIATE

}  // namespace upanets::ops
