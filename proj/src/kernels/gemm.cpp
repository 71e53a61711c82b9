#include "upanets/kernels/gemm.hpp"

#include <algorithm>
#include <vector>

namespace upanets::kernels {

namespace {

template <typename T>
struct Tile;

#if defined(__AVX512F__)
template <>
struct Tile<float> {
  static constexpr int kRows = 8;
  static constexpr int kCols = 32;
};
template <>
struct Tile<double> {
  static constexpr int kRows = 8;
  static constexpr int kCols = 16;
};
#else
template <>
struct Tile<float> {
  static constexpr int kRows = 6;
  static constexpr int kCols = 16;
};
template <>
struct Tile<double> {
  static constexpr int kRows = 6;
  static constexpr int kCols = 8;
};
#endif

constexpr Index kBlockK = 256;
constexpr Index kBlockM = 96;
constexpr Index kBlockN = 2048;

template <typename T>
inline T element(Trans trans, const T* p, Index ld, Index row, Index col) {
  return trans == Trans::No ? p[row * ld + col] : p[col * ld + row];
}

// A block [mc x kc] -> panels of kRows rows, each stored k-major, zero padded.
template <typename T>
void pack_a(Trans trans, const T* a, Index lda, Index row0, Index col0, Index mc, Index kc, T* out) {
  constexpr int R = Tile<T>::kRows;
  for (Index ir = 0; ir < mc; ir += R) {
    const Index rows = std::min<Index>(R, mc - ir);
    for (Index p = 0; p < kc; ++p) {
      for (Index i = 0; i < rows; ++i) out[i] = element(trans, a, lda, row0 + ir + i, col0 + p);
      for (Index i = rows; i < R; ++i) out[i] = T{0};
      out += R;
    }
  }
}

// B block [kc x nc] -> panels of kCols columns, each stored k-major, zero padded.
template <typename T>
void pack_b(Trans trans, const T* b, Index ldb, Index row0, Index col0, Index kc, Index nc, T* out) {
  constexpr int C = Tile<T>::kCols;
  for (Index jr = 0; jr < nc; jr += C) {
    const Index cols = std::min<Index>(C, nc - jr);
    for (Index p = 0; p < kc; ++p) {
      if (trans == Trans::No && cols == C) {
        const T* src = b + (row0 + p) * ldb + col0 + jr;
        std::copy(src, src + C, out);
      } else {
        for (Index j = 0; j < cols; ++j) out[j] = element(trans, b, ldb, row0 + p, col0 + jr + j);
        for (Index j = cols; j < C; ++j) out[j] = T{0};
      }
      out += C;
    }
  }
}

template <typename T>
inline void micro_kernel(Index kc, const T* __restrict ap, const T* __restrict bp, T* c, Index ldc, Index rows,
                         Index cols, T alpha) {
  constexpr int R = Tile<T>::kRows;
  constexpr int C = Tile<T>::kCols;
  T acc[R][C] = {};
  for (Index p = 0; p < kc; ++p) {
    const T* bq = bp + p * C;
    const T* aq = ap + p * R;
#pragma GCC unroll 8
    for (int i = 0; i < R; ++i) {
      const T av = aq[i];
#pragma GCC unroll 32
      for (int j = 0; j < C; ++j) acc[i][j] += av * bq[j];
    }
  }
  if (rows == R && cols == C) {
    for (int i = 0; i < R; ++i) {
      T* row = c + i * ldc;
#pragma GCC unroll 32
      for (int j = 0; j < C; ++j) row[j] += alpha * acc[i][j];
    }
  } else {
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) c[i * ldc + j] += alpha * acc[i][j];
    }
  }
}

template <typename T>
void scale_output(Index m, Index n, T beta, T* c, Index ldc) {
  if (beta == T{1}) return;
  for (Index i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T{0}) {
      std::fill(row, row + n, T{0});
    } else {
      for (Index j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

}  // namespace

template <typename T>
void gemm(Trans trans_a, Trans trans_b, Index m, Index n, Index k, T alpha, const T* a, Index lda, const T* b,
          Index ldb, T beta, T* c, Index ldc) {
  if (m <= 0 || n <= 0) return;
  scale_output(m, n, beta, c, ldc);
  if (k <= 0 || alpha == T{0}) return;

  constexpr int R = Tile<T>::kRows;
  constexpr int C = Tile<T>::kCols;
  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;

  for (Index jc = 0; jc < n; jc += kBlockN) {
    const Index nc = std::min(kBlockN, n - jc);
    for (Index pc = 0; pc < k; pc += kBlockK) {
      const Index kc = std::min(kBlockK, k - pc);
      packed_b.resize(static_cast<std::size_t>(((nc + C - 1) / C) * C * kc));
      pack_b(trans_b, b, ldb, pc, jc, kc, nc, packed_b.data());
      for (Index ic = 0; ic < m; ic += kBlockM) {
        const Index mc = std::min(kBlockM, m - ic);
        packed_a.resize(static_cast<std::size_t>(((mc + R - 1) / R) * R * kc));
        pack_a(trans_a, a, lda, ic, pc, mc, kc, packed_a.data());
        for (Index jr = 0; jr < nc; jr += C) {
          const T* bp = packed_b.data() + (jr / C) * C * kc;
          for (Index ir = 0; ir < mc; ir += R) {
            const T* ap = packed_a.data() + (ir / R) * R * kc;
            micro_kernel(kc, ap, bp, c + (ic + ir) * ldc + jc + jr, ldc, std::min<Index>(R, mc - ir),
                         std::min<Index>(C, nc - jr), alpha);
          }
        }
      }
    }
  }
}

namespace reference {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, Index m, Index n, Index k, T alpha, const T* a, Index lda, const T* b,
          Index ldb, T beta, T* c, Index ldc) {
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      T sum{0};
      for (Index p = 0; p < k; ++p) sum += element(trans_a, a, lda, i, p) * element(trans_b, b, ldb, p, j);
      T& out = c[i * ldc + j];
      out = (beta == T{0} ? T{0} : beta * out) + alpha * sum;
    }
  }
}

template void gemm<float>(Trans, Trans, Index, Index, Index, float, const float*, Index, const float*, Index, float,
                          float*, Index);
template void gemm<double>(Trans, Trans, Index, Index, Index, double, const double*, Index, const double*, Index,
                           double, double*, Index);

}  // namespace reference

template void gemm<float>(Trans, Trans, Index, Index, Index, float, const float*, Index, const float*, Index, float,
                          float*, Index);
template void gemm<double>(Trans, Trans, Index, Index, Index, double, const double*, Index, const double*, Index,
                           double, double*, Index);

}  // namespace upanets::kernels
