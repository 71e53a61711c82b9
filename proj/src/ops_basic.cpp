#include <algorithm>
#include <string>
#include <vector>

#include "op_support.hpp"
#include "upanets/kernels/gemm.hpp"
#include "upanets/kernels/parallel.hpp"
#include "upanets/ops.hpp"

namespace upanets::ops {

using kernels::Trans;

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.rank() >= 2, "matmul left factor needs rank >= 2, got " + a.shape().str());
  detail::require(b.rank() == 2, "matmul right factor must be K x P, got " + b.shape().str());
  const Index k = a.shape().back();
  detail::require(b.dim(0) == k, "matmul inner extents differ: " + a.shape().str() + " x " + b.shape().str());
  const Index p = b.dim(1);
  const Index rows = a.numel() / k;
  std::vector<Index> dims(a.shape().dims().begin(), a.shape().dims().end());
  dims.back() = p;
  std::vector<T> out(static_cast<std::size_t>(rows * p));
  kernels::gemm<T>(Trans::No, Trans::No, rows, p, k, T{1}, a.data(), k, b.data(), p, T{0}, out.data(), p);
  auto backward = [=, as = a.storage(), bs = b.storage()](std::span<const T> g, const detail::NodeList<T>& ins) {
    if (T* da = detail::grad_of(ins, 0)) {
      kernels::gemm<T>(Trans::No, Trans::Yes, rows, k, p, T{1}, g.data(), p, bs->data(), p, T{1}, da, k);
    }
    if (T* db = detail::grad_of(ins, 1)) {
      kernels::gemm<T>(Trans::Yes, Trans::No, k, p, rows, T{1}, as->data(), k, g.data(), p, T{1}, db, p);
    }
  };
  return detail::make_result<T>("matmul", Shape(std::move(dims)), std::move(out), {&a, &b}, std::move(backward));
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  const auto x = input.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  auto backward = [xs = input.storage()](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    const T* x = xs->data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T{0}) dx[i] += g[i];
    }
  };
  return detail::make_result<T>("relu", input.shape(), std::move(out), {&input}, std::move(backward));
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add needs equal shapes, got " + a.shape().str() + " and " + b.shape().str());
  const auto x = a.values();
  const auto y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  auto backward = [](std::span<const T> g, const detail::NodeList<T>& ins) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* d = detail::grad_of(ins, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  };
  return detail::make_result<T>("add", a.shape(), std::move(out), {&a, &b}, std::move(backward));
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul needs equal shapes, got " + a.shape().str() + " and " + b.shape().str());
  const auto x = a.values();
  const auto y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  auto backward = [as = a.storage(), bs = b.storage()](std::span<const T> g, const detail::NodeList<T>& ins) {
    if (T* da = detail::grad_of(ins, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (*bs)[i];
    }
    if (T* db = detail::grad_of(ins, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * (*as)[i];
    }
  };
  return detail::make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, std::move(backward));
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor) {
  const auto x = input.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  auto backward = [factor](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
  };
  return detail::make_result<T>("scale", input.shape(), std::move(out), {&input}, std::move(backward));
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias) {
  const Index width = bias.numel();
  detail::require(width == 1 || (input.rank() >= 1 && input.shape().back() == width),
                  "add_bias: bias " + bias.shape().str() + " does not match last extent of " + input.shape().str());
  const auto x = input.values();
  const auto b = bias.values();
  std::vector<T> out(x.size());
  if (width == 1) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + b[0];
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + b[i % static_cast<std::size_t>(width)];
  }
  auto backward = [width](std::span<const T> g, const detail::NodeList<T>& ins) {
    if (T* dx = detail::grad_of(ins, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
    if (T* db = detail::grad_of(ins, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) db[width == 1 ? 0 : i % static_cast<std::size_t>(width)] += g[i];
    }
  };
  return detail::make_result<T>("add_bias", input.shape(), std::move(out), {&input, &bias}, std::move(backward));
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  T acc{0};
  for (T v : input.values()) acc += v;
  auto backward = [](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    const std::size_t n = ins[0]->size;
    for (std::size_t i = 0; i < n; ++i) dx[i] += g[0];
  };
  return detail::make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {&input}, std::move(backward));
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input) {
  return scale(sum(input), T{1} / static_cast<T>(input.numel()));
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  detail::require(shape.numel() == input.numel(),
                  "reshape " + input.shape().str() + " -> " + shape.str() + " changes element count");
  std::shared_ptr<autograd::Node<T>> node;
  if (autograd::grad_enabled() && input.requires_grad()) {
    node = std::make_shared<autograd::Node<T>>();
    node->op = "reshape";
    node->size = static_cast<std::size_t>(input.numel());
    node->inputs = {input.node()};
    node->backward = [parent = input.node()](std::span<const T> g) {
      T* dx = parent->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    };
  }
  return BasicTensor<T>::from_parts(std::move(shape), input.storage(), std::move(node));
}

template <typename T>
BasicTensor<T> to_channels_last(const BasicTensor<T>& input) {
  detail::require(input.rank() == 4, "to_channels_last needs N x C x H x W, got " + input.shape().str());
  const Index n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const T* x = input.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * hw));
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const T* src = x + (s * c + ch) * hw;
      T* dst = out.data() + s * hw * c + ch;
      for (Index p = 0; p < hw; ++p) dst[p * c] = src[p];
    }
  }
  auto backward = [=](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    for (Index s = 0; s < n; ++s) {
      for (Index ch = 0; ch < c; ++ch) {
        T* dst = dx + (s * c + ch) * hw;
        const T* src = g.data() + s * hw * c + ch;
        for (Index p = 0; p < hw; ++p) dst[p] += src[p * c];
      }
    }
  };
  return detail::make_result<T>("to_channels_last", Shape{n, hw, c}, std::move(out), {&input}, std::move(backward));
}

template <typename T>
BasicTensor<T> from_channels_last(const BasicTensor<T>& input, Index height, Index width) {
  detail::require(input.rank() == 3 && input.dim(1) == height * width,
                  "from_channels_last: " + input.shape().str() + " is not N x (" + std::to_string(height) + "*" +
                      std::to_string(width) + ") x C");
  const Index n = input.dim(0), hw = input.dim(1), c = input.dim(2);
  const T* x = input.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * hw));
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const T* src = x + s * hw * c + ch;
      T* dst = out.data() + (s * c + ch) * hw;
      for (Index p = 0; p < hw; ++p) dst[p] = src[p * c];
    }
  }
  auto backward = [=](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    for (Index s = 0; s < n; ++s) {
      for (Index ch = 0; ch < c; ++ch) {
        const T* src = g.data() + (s * c + ch) * hw;
        T* dst = dx + s * hw * c + ch;
        for (Index p = 0; p < hw; ++p) dst[p * c] += src[p];
      }
    }
  };
  return detail::make_result<T>("from_channels_last", Shape{n, c, height, width}, std::move(out), {&input},
                                std::move(backward));
}

template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input, Index groups) {
  detail::require(input.rank() == 4, "channel_shuffle needs N x C x H x W, got " + input.shape().str());
  const Index n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (groups < 1 || c % groups != 0) {
    throw ConfigError("channel_shuffle groups=" + std::to_string(groups) + " must divide C=" + std::to_string(c));
  }
  const Index per = c / groups;
  const T* x = input.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * hw));
  for (Index s = 0; s < n; ++s) {
    for (Index g = 0; g < groups; ++g) {
      for (Index j = 0; j < per; ++j) {
        const T* src = x + (s * c + g * per + j) * hw;
        std::copy(src, src + hw, out.data() + (s * c + j * groups + g) * hw);
      }
    }
  }
  auto backward = [=](std::span<const T> grad, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    for (Index s = 0; s < n; ++s) {
      for (Index g = 0; g < groups; ++g) {
        for (Index j = 0; j < per; ++j) {
          const T* src = grad.data() + (s * c + j * groups + g) * hw;
          T* dst = dx + (s * c + g * per + j) * hw;
          for (Index p = 0; p < hw; ++p) dst[p] += src[p];
        }
      }
    }
  };
  return detail::make_result<T>("channel_shuffle", input.shape(), std::move(out), {&input}, std::move(backward));
}

template <typename T>
BasicTensor<T> gap(const BasicTensor<T>& input) {
  detail::require(input.rank() == 4, "gap needs N x C x H x W, got " + input.shape().str());
  const Index planes = input.dim(0) * input.dim(1);
  const Index hw = input.dim(2) * input.dim(3);
  const T inv = T{1} / static_cast<T>(hw);
  const T* x = input.data();
  std::vector<T> out(static_cast<std::size_t>(planes));
  for (Index p = 0; p < planes; ++p) {
    T acc{0};
    for (Index i = 0; i < hw; ++i) acc += x[p * hw + i];
    out[p] = acc * inv;
  }
  auto backward = [=](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    for (Index p = 0; p < planes; ++p) {
      const T v = g[p] * inv;
      for (Index i = 0; i < hw; ++i) dx[p * hw + i] += v;
    }
  };
  return detail::make_result<T>("gap", Shape{input.dim(0), input.dim(1)}, std::move(out), {&input},
                                std::move(backward));
}

template <typename T>
BasicTensor<T> spatial_attention(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                 const BasicTensor<T>* bias) {
  detail::require(input.rank() == 4, "spatial_attention needs N x C x H x W, got " + input.shape().str());
  const Index n = input.dim(0), c = input.dim(1), length = input.dim(2) * input.dim(3);
  detail::require(weight.numel() == length, "spatial_attention weight has " + std::to_string(weight.numel()) +
                                                " entries but feature maps have H*W=" + std::to_string(length));
  auto pooled = matmul(reshape(input, Shape{n, c, length}), reshape(weight, Shape{length, 1}));
  auto flat = reshape(pooled, Shape{n, c});
  return bias ? add_bias(flat, *bias) : flat;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>* bias) {
  detail::require(input.rank() == 2, "linear input must be N x K, got " + input.shape().str());
  auto out = matmul(input, weight);
  return bias ? add_bias(out, *bias) : out;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  detail::require(!parts.empty(), "concat_channels needs at least one part");
  const Shape& first = parts[0].shape();
  detail::require(first.rank() >= 2, "concat_channels parts need rank >= 2, got " + first.str());
  const Index n = first[0];
  const Index inner = first.trailing(2);
  Index total = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.rank() && p.dim(0) == n;
    for (std::size_t ax = 2; ok && ax < first.rank(); ++ax) ok = p.dim(ax) == first[ax];
    detail::require(ok, "concat_channels part " + p.shape().str() + " does not match " + first.str() +
                            " outside axis 1");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(static_cast<std::size_t>(n * total * inner));
  for (Index s = 0; s < n; ++s) {
    T* dst = out.data() + s * total * inner;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Index chunk = widths[k] * inner;
      const T* src = parts[k].data() + s * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  std::vector<Index> dims(first.dims().begin(), first.dims().end());
  dims[1] = total;
  auto backward = [=](std::span<const T> g, const detail::NodeList<T>& ins) {
    Index offset = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      const Index chunk = widths[k] * inner;
      if (T* d = detail::grad_of(ins, k)) {
        for (Index s = 0; s < n; ++s) {
          const T* src = g.data() + s * total * inner + offset;
          T* dst = d + s * chunk;
          for (Index i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += chunk;
    }
  };
  std::vector<const BasicTensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return detail::make_result<T>("concat_channels", Shape(std::move(dims)), std::move(out), inputs,
                                std::move(backward));
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, Index begin, Index count) {
  detail::require(input.rank() >= 2, "slice_channels needs rank >= 2, got " + input.shape().str());
  const Index c = input.dim(1);
  detail::require(begin >= 0 && count > 0 && begin + count <= c,
                  "slice_channels [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                      ") outside " + input.shape().str());
  const Index n = input.dim(0);
  const Index inner = input.shape().trailing(2);
  std::vector<T> out(static_cast<std::size_t>(n * count * inner));
  for (Index s = 0; s < n; ++s) {
    const T* src = input.data() + (s * c + begin) * inner;
    std::copy(src, src + count * inner, out.data() + s * count * inner);
  }
  std::vector<Index> dims(input.shape().dims().begin(), input.shape().dims().end());
  dims[1] = count;
  auto backward = [=](std::span<const T> g, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    for (Index s = 0; s < n; ++s) {
      const T* src = g.data() + s * count * inner;
      T* dst = dx + (s * c + begin) * inner;
      for (Index i = 0; i < count * inner; ++i) dst[i] += src[i];
    }
  };
  return detail::make_result<T>("slice_channels", Shape(std::move(dims)), std::move(out), {&input},
                                std::move(backward));
}

#define UPANETS_INSTANTIATE(T)                                                                          \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                          \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                               \
  template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                         \
  template BasicTensor<T> to_channels_last(const BasicTensor<T>&);                                       \
  template BasicTensor<T> from_channels_last(const BasicTensor<T>&, Index, Index);                       \
  template BasicTensor<T> channel_shuffle(const BasicTensor<T>&, Index);                                 \
  template BasicTensor<T> gap(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> spatial_attention(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                            const BasicTensor<T>*);                                      \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*);   \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);                              \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, Index, Index);

UPANETS_INSTANTIATE(float)
UPANETS_INSTANTIATE(double)
#undef UPANETS_INSTANTIATE

}  // namespace upanets::ops
