#ifndef SSEP_KERNELS_HPP
#define SSEP_KERNELS_HPP

#include <complex>
#include <cstdint>
#include <vector>

#include "ssep/array.hpp"

namespace ssep::kernels {

/// Two interchangeable implementations of every compute kernel: `kParallel`
/// (OpenMP + BLAS, the production path) and `kSerial` (plain loops, the
/// reference the parallel path is validated against).
enum class Backend { kSerial, kParallel };

Backend backend();
void set_backend(Backend b);

struct BackendGuard {
  explicit BackendGuard(Backend b) : prev_(backend()) { set_backend(b); }
  ~BackendGuard() { set_backend(prev_); }

 private:
  Backend prev_;
};

/// Geometry of a forward convolution in_hw -> out_hw. Padding is derived
/// from the requested output size, extra padding goes to the bottom/right.
struct ConvGeom {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int k_h = 3, k_w = 3;
  int stride = 1;
  int pad_h0 = 0, pad_w0 = 0;

  static ConvGeom from_output_target(int in_h, int in_w, int k, int stride, int out_h, int out_w);
};

// Convolution trio. All tensors are NCHW row-major. The three kernels are
// mutually adjoint: data_bwd and weight_bwd are the derivatives of fwd, and
// each one's derivatives are again expressible with the other two, which is
// what makes second-order autodiff close over this set.
//
//   y[n,co,p]   = sum_{ci,k} w[co,ci,k] * x[n,ci,sigma(p,k)]
//   dx[n,ci,q]  = sum_{co,p,k: sigma(p,k)=q} w[co,ci,k] * gy[n,co,p]
//   dw[co,ci,k] = sum_{n,p} gy[n,co,p] * x[n,ci,sigma(p,k)]
//
// with sigma(p,k) = p*stride - pad + k, out of range reads as zero.
template <typename T>
void conv2d_fwd(const Array<T>& x, const Array<T>& w, const ConvGeom& g, Array<T>& y);
template <typename T>
void conv2d_data_bwd(const Array<T>& gy, const Array<T>& w, const ConvGeom& g, Array<T>& dx);
template <typename T>
void conv2d_weight_bwd(const Array<T>& x, const Array<T>& gy, const ConvGeom& g, Array<T>& dw);

/// C(m,n) = alpha * op(A)(m,k) * op(B)(k,n) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

// Elementwise / reduction helpers (deterministic regardless of thread count:
// parallel loops only over independent outputs, reductions accumulate in
// double sequentially).
template <typename T>
void map_relu(const T* x, T* y, std::int64_t n);
template <typename T>
void map_leaky_relu(const T* x, T* y, std::int64_t n, T slope);
template <typename T>
void map_mask_positive(const T* x, T* m, std::int64_t n, T negative_value);
template <typename T>
void vadd(const T* a, const T* b, T* y, std::int64_t n);
template <typename T>
void vsub(const T* a, const T* b, T* y, std::int64_t n);
template <typename T>
void vmul(const T* a, const T* b, T* y, std::int64_t n);
template <typename T>
void vdiv(const T* a, const T* b, T* y, std::int64_t n);
template <typename T>
void vscale(const T* a, T s, T* y, std::int64_t n);
template <typename T>
void vaxpy(T alpha, const T* x, T* y, std::int64_t n);  // y += alpha*x
template <typename T>
double reduce_sum(const T* x, std::int64_t n);
template <typename T>
double reduce_sumsq(const T* x, std::int64_t n);

// Broadcasting over rank-4 views (dims of size 1 in `b` repeat).
template <typename T>
void broadcast_add(const Array<T>& a, const Array<T>& b, Array<T>& y);
template <typename T>
void broadcast_mul(const Array<T>& a, const Array<T>& b, Array<T>& y);
/// Sum `g` down to `out`'s (broadcast-compatible) shape.
template <typename T>
void reduce_to(const Array<T>& g, Array<T>& out);

using Complex = std::complex<double>;

/// In-place radix-2 FFT, size must be a power of two. forward uses the
/// e^{-i 2 pi k n / N} convention; inverse includes the 1/N factor.
void fft_inplace(Complex* data, int n, bool inverse);

/// FFT of each length-n row of `frames` (batch of frames), parallel backend
/// fans rows out over threads.
void fft_rows(std::vector<std::vector<Complex>>& frames, bool inverse);

}  // namespace ssep::kernels

#endif  // SSEP_KERNELS_HPP
