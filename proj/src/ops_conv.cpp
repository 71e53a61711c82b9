#include <algorithm>
#include <string>
#include <vector>

#include "op_support.hpp"
#include "upanets/kernels/conv.hpp"
#include "upanets/kernels/gemm.hpp"
#include "upanets/kernels/parallel.hpp"
#include "upanets/ops.hpp"

namespace upanets::ops {

namespace {

using kernels::ConvGeometry;
using kernels::Trans;

// Images per weight-gradient partial sum. Fixed so the reduction order does
// not depend on the thread count.
constexpr Index kGradChunks = 8;

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>* bias,
                      Index stride, Index pad, Index groups) {
  detail::require(input.rank() == 4, "conv2d input must be N x C x H x W, got " + input.shape().str());
  detail::require(kernel.rank() == 4, "conv2d kernel must be Cout x Cin/g x kh x kw, got " + kernel.shape().str());
  if (groups < 1 || stride < 1 || pad < 0) throw ConfigError("conv2d needs groups >= 1, stride >= 1, pad >= 0");
  const Index batch = input.dim(0);
  const Index cin = input.dim(1);
  const Index height = input.dim(2);
  const Index width = input.dim(3);
  const Index cout = kernel.dim(0);
  if (cin % groups != 0 || cout % groups != 0) {
    throw ConfigError("conv2d groups=" + std::to_string(groups) + " must divide Cin=" + std::to_string(cin) +
                      " and Cout=" + std::to_string(cout));
  }
  const Index cin_g = cin / groups;
  const Index cout_g = cout / groups;
  detail::require(kernel.dim(1) == cin_g, "conv2d kernel " + kernel.shape().str() + " does not match input " +
                                              input.shape().str() + " with groups=" + std::to_string(groups));
  if (bias) detail::require(bias->rank() == 1 && bias->dim(0) == cout, "conv2d bias must have Cout entries");

  ConvGeometry geo{cin_g, height, width, kernel.dim(2), kernel.dim(3), stride, pad};
  if (geo.kernel_h > height + 2 * pad || geo.kernel_w > width + 2 * pad) {
    throw DimensionError("conv2d kernel " + kernel.shape().str() + " larger than padded input " + input.shape().str());
  }
  if ((height + 2 * pad - geo.kernel_h) % stride != 0 || (width + 2 * pad - geo.kernel_w) % stride != 0) {
    throw ConfigError("conv2d output extent is not an integer for input " + input.shape().str() +
                      " stride=" + std::to_string(stride) + " pad=" + std::to_string(pad));
  }
  const Index oh = geo.out_h();
  const Index ow = geo.out_w();
  const Index plane = oh * ow;
  const Index patch = geo.patch();
  const Index in_image = cin * height * width;
  const Index out_image = cout * plane;

  std::vector<T> out(static_cast<std::size_t>(batch * out_image));
  const T* x = input.data();
  const T* w = kernel.data();
  const T* b = bias ? bias->data() : nullptr;
  kernels::parallel_for(0, batch, [&](Index n) {
    thread_local std::vector<T> cols;
    cols.resize(static_cast<std::size_t>(patch * plane));
    for (Index g = 0; g < groups; ++g) {
      kernels::im2col(geo, x + n * in_image + g * cin_g * height * width, cols.data());
      T* dst = out.data() + n * out_image + g * cout_g * plane;
      kernels::gemm<T>(Trans::No, Trans::No, cout_g, plane, patch, T{1}, w + g * cout_g * patch, patch, cols.data(),
                       plane, T{0}, dst, plane);
    }
    if (b) {
      for (Index c = 0; c < cout; ++c) {
        T* dst = out.data() + n * out_image + c * plane;
        for (Index i = 0; i < plane; ++i) dst[i] += b[c];
      }
    }
  });

  auto backward = [=, xs = input.storage(), ws = kernel.storage()](std::span<const T> gout,
                                                                     const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    T* dw = detail::grad_of(ins, 1);
    T* db = ins.size() > 2 ? detail::grad_of(ins, 2) : nullptr;
    const T* xv = xs->data();
    const T* wv = ws->data();
    const Index chunks = std::min(batch, kGradChunks);
    const Index wsize = cout * patch;
    std::vector<T> partial(dw ? static_cast<std::size_t>(chunks * wsize) : 0, T{0});
    kernels::parallel_for(0, chunks, [&](Index chunk) {
      thread_local std::vector<T> cols;
      cols.resize(static_cast<std::size_t>(patch * plane));
      const Index lo = chunk * batch / chunks;
      const Index hi = (chunk + 1) * batch / chunks;
      for (Index n = lo; n < hi; ++n) {
        for (Index g = 0; g < groups; ++g) {
          const T* go = gout.data() + n * out_image + g * cout_g * plane;
          if (dw) {
            kernels::im2col(geo, xv + n * in_image + g * cin_g * height * width, cols.data());
            kernels::gemm<T>(Trans::No, Trans::Yes, cout_g, patch, plane, T{1}, go, plane, cols.data(), plane, T{1},
                             partial.data() + chunk * wsize + g * cout_g * patch, patch);
          }
          if (dx) {
            kernels::gemm<T>(Trans::Yes, Trans::No, patch, plane, cout_g, T{1}, wv + g * cout_g * patch, patch, go,
                             plane, T{0}, cols.data(), plane);
            kernels::col2im_add(geo, cols.data(), dx + n * in_image + g * cin_g * height * width);
          }
        }
      }
    });
    if (dw) {
      for (Index chunk = 0; chunk < chunks; ++chunk) {
        const T* src = partial.data() + chunk * wsize;
        for (Index i = 0; i < wsize; ++i) dw[i] += src[i];
      }
    }
    if (db) {
      for (Index n = 0; n < batch; ++n) {
        for (Index c = 0; c < cout; ++c) {
          const T* go = gout.data() + n * out_image + c * plane;
          T acc{0};
          for (Index i = 0; i < plane; ++i) acc += go[i];
          db[c] += acc;
        }
      }
    }
  };
  std::vector<const BasicTensor<T>*> inputs{&input, &kernel};
  if (bias) inputs.push_back(bias);
  return detail::make_result<T>("conv2d", Shape{batch, cout, oh, ow}, std::move(out), inputs, std::move(backward));
}

template <typename T>
BasicTensor<T> avgpool2d(const BasicTensor<T>& input, Index k, Index stride) {
  detail::require(input.rank() == 4, "avgpool2d input must be N x C x H x W, got " + input.shape().str());
  if (k < 1 || stride < 1) throw ConfigError("avgpool2d needs k >= 1 and stride >= 1");
  const Index batch = input.dim(0);
  const Index channels = input.dim(1);
  const Index height = input.dim(2);
  const Index width = input.dim(3);
  if (k > height || k > width || (height - k) % stride != 0 || (width - k) % stride != 0) {
    throw ConfigError("avgpool2d k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                      " does not tile input " + input.shape().str());
  }
  const Index oh = (height - k) / stride + 1;
  const Index ow = (width - k) / stride + 1;
  const Index planes = batch * channels;
  const T inv = T{1} / static_cast<T>(k * k);
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
  const T* x = input.data();
  kernels::parallel_for(0, planes, [&](Index p) {
    const T* src = x + p * height * width;
    T* dst = out.data() + p * oh * ow;
    for (Index y = 0; y < oh; ++y) {
      for (Index xo = 0; xo < ow; ++xo) {
        T acc{0};
        for (Index i = 0; i < k; ++i) {
          const T* row = src + (y * stride + i) * width + xo * stride;
          for (Index j = 0; j < k; ++j) acc += row[j];
        }
        dst[y * ow + xo] = acc * inv;
      }
    }
  });
  auto backward = [=](std::span<const T> gout, const detail::NodeList<T>& ins) {
    T* dx = detail::grad_of(ins, 0);
    kernels::parallel_for(0, planes, [&](Index p) {
      T* dst = dx + p * height * width;
      const T* go = gout.data() + p * oh * ow;
      for (Index y = 0; y < oh; ++y) {
        for (Index xo = 0; xo < ow; ++xo) {
          const T g = go[y * ow + xo] * inv;
          for (Index i = 0; i < k; ++i) {
            T* row = dst + (y * stride + i) * width + xo * stride;
            for (Index j = 0; j < k; ++j) row[j] += g;
          }
        }
      }
    });
  };
  return detail::make_result<T>("avgpool2d", Shape{batch, channels, oh, ow}, std::move(out), {&input},
                                std::move(backward));
}

template BasicTensor<float> conv2d(const BasicTensor<float>&, const BasicTensor<float>&, const BasicTensor<float>*,
                                   Index, Index, Index);
template BasicTensor<double> conv2d(const BasicTensor<double>&, const BasicTensor<double>&,
                                    const BasicTensor<double>*, Index, Index, Index);
template BasicTensor<float> avgpool2d(const BasicTensor<float>&, Index, Index);
template BasicTensor<double> avgpool2d(const BasicTensor<double>&, Index, Index);

}  // namespace upanets::ops
