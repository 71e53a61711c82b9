#pragma once

#include "upanets/shape.hpp"

namespace upanets::kernels {

/// Geometry of one image-level convolution.
struct ConvGeometry {
  Index channels = 0;  // input channels seen by one group
  Index height = 0;
  Index width = 0;
  Index kernel_h = 0;
  Index kernel_w = 0;
  Index stride = 1;
  Index pad = 0;

  [[nodiscard]] Index out_h() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  [[nodiscard]] Index out_w() const { return (width + 2 * pad - kernel_w) / stride + 1; }
  [[nodiscard]] Index patch() const { return channels * kernel_h * kernel_w; }
};

/// image[C,H,W] -> cols[C*kh*kw, out_h*out_w] with zero padding.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols);

/// Adjoint of im2col: accumulates cols back into image[C,H,W].
template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* image);

namespace reference {

/// Direct six-loop convolution over a batch, NCHW, grouped; bias may be null.
template <typename T>
void conv2d_direct(const T* input, Index batch, Index in_channels, Index height, Index width, const T* kernel,
                   Index out_channels, Index kernel_h, Index kernel_w, const T* bias, Index stride, Index pad,
                   Index groups, T* output);

/// Direct k x k window mean, no padding.
template <typename T>
void avgpool2d(const T* input, Index planes, Index height, Index width, Index k, Index stride, T* output);

}  // namespace reference
}  // namespace upanets::kernels
