#include "upanets/kernels/conv.hpp"

#include <algorithm>

namespace upanets::kernels {

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
  const Index oh = g.out_h();
  const Index ow = g.out_w();
  for (Index c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        T* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * g.stride - g.pad + ki;
          T* out = row + y * ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(out, out + ow, T{0});
            continue;
          }
          const T* src = plane + iy * g.width;
          if (g.stride == 1) {
            // Valid x range: 0 <= x - pad + kj < width.
            const Index lo = std::clamp<Index>(g.pad - kj, 0, ow);
            const Index hi = std::clamp<Index>(g.width + g.pad - kj, lo, ow);
            std::fill(out, out + lo, T{0});
            std::copy(src + lo - g.pad + kj, src + hi - g.pad + kj, out + lo);
            std::fill(out + hi, out + ow, T{0});
          } else {
            for (Index x = 0; x < ow; ++x) {
              const Index ix = x * g.stride - g.pad + kj;
              out[x] = (ix >= 0 && ix < g.width) ? src[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* image) {
  const Index oh = g.out_h();
  const Index ow = g.out_w();
  for (Index c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          const T* in = row + y * ow;
          T* dst = plane + iy * g.width;
          for (Index x = 0; x < ow; ++x) {
            const Index ix = x * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.width) dst[ix] += in[x];
          }
        }
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_direct(const T* input, Index batch, Index in_channels, Index height, Index width, const T* kernel,
                   Index out_channels, Index kernel_h, Index kernel_w, const T* bias, Index stride, Index pad,
                   Index groups, T* output) {
  const Index oh = (height + 2 * pad - kernel_h) / stride + 1;
  const Index ow = (width + 2 * pad - kernel_w) / stride + 1;
  const Index cin_g = in_channels / groups;
  const Index cout_g = out_channels / groups;
  for (Index n = 0; n < batch; ++n) {
    for (Index co = 0; co < out_channels; ++co) {
      const Index group = co / cout_g;
      for (Index y = 0; y < oh; ++y) {
        for (Index x = 0; x < ow; ++x) {
          T acc = bias ? bias[co] : T{0};
          for (Index ci = 0; ci < cin_g; ++ci) {
            const Index c = group * cin_g + ci;
            for (Index ki = 0; ki < kernel_h; ++ki) {
              for (Index kj = 0; kj < kernel_w; ++kj) {
                const Index iy = y * stride - pad + ki;
                const Index ix = x * stride - pad + kj;
                if (iy < 0 || iy >= height || ix < 0 || ix >= width) continue;
                acc += input[((n * in_channels + c) * height + iy) * width + ix] *
                       kernel[((co * cin_g + ci) * kernel_h + ki) * kernel_w + kj];
              }
            }
          }
          output[((n * out_channels + co) * oh + y) * ow + x] = acc;
        }
      }
    }
  }
}

template <typename T>
void avgpool2d(const T* input, Index planes, Index height, Index width, Index k, Index stride, T* output) {
  const Index oh = (height - k) / stride + 1;
  const Index ow = (width - k) / stride + 1;
  const T inv = T{1} / static_cast<T>(k * k);
  for (Index p = 0; p < planes; ++p) {
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        T acc{0};
        for (Index i = 0; i < k; ++i) {
          for (Index j = 0; j < k; ++j) acc += input[(p * height + y * stride + i) * width + x * stride + j];
        }
        output[(p * oh + y) * ow + x] = acc * inv;
      }
    }
  }
}

template void conv2d_direct<float>(const float*, Index, Index, Index, Index, const float*, Index, Index, Index,
                                   const float*, Index, Index, Index, float*);
template void conv2d_direct<double>(const double*, Index, Index, Index, Index, const double*, Index, Index, Index,
                                    const double*, Index, Index, Index, double*);
template void avgpool2d<float>(const float*, Index, Index, Index, Index, Index, float*);
template void avgpool2d<double>(const double*, Index, Index, Index, Index, Index, double*);

}  // namespace reference

template void im2col<float>(const ConvGeometry&, const float*, float*);
template void im2col<double>(const ConvGeometry&, const double*, double*);
template void col2im_add<float>(const ConvGeometry&, const float*, float*);
template void col2im_add<double>(const ConvGeometry&, const double*, double*);

}  // namespace upanets::kernels
