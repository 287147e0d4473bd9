#include "ssep/kernels.hpp"

#include <atomic>
#include <cblas.h>
#include <cmath>
#include <cstring>
#include <omp.h>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace ssep::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::kParallel};

struct BlasInit {
  BlasInit() {
    // Threading lives at the kernel level (OpenMP over examples); nested
    // BLAS threads would fight for the cores and break thread-count
    // invariance of results.
    openblas_set_num_threads(1);
  }
} g_blas_init;

// Number of independent accumulation slots for weight gradients. Examples
// are assigned to slots by index, and slots are merged in fixed order, so
// the result is identical for any OpenMP thread count.
constexpr int kWgradSlots = 8;

inline void cblas_gemm_impl(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                            int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void cblas_gemm_impl(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                            int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void gemm_serial(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
                 int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) {
        T av = ta ? a[l * lda + i] : a[i * lda + l];
        T bv = tb ? b[j * ldb + l] : b[l * ldb + j];
        acc += static_cast<double>(av) * static_cast<double>(bv);
      }
      c[i * ldc + j] = static_cast<T>(alpha * acc + (beta == T(0) ? 0.0 : beta * c[i * ldc + j]));
    }
  }
}

// col matrix layout: (ci*kh*kw) rows x (out_h*out_w) cols, row-major.
template <typename T>
void im2col(const T* x, int ci, const ConvGeom& g, T* col) {
  const int p_total = g.out_h * g.out_w;
  for (int c = 0; c < ci; ++c) {
    for (int kh = 0; kh < g.k_h; ++kh) {
      for (int kw = 0; kw < g.k_w; ++kw) {
        T* row = col + ((c * g.k_h + kh) * g.k_w + kw) * p_total;
        for (int oh = 0; oh < g.out_h; ++oh) {
          int ih = oh * g.stride - g.pad_h0 + kh;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.in_h) {
            std::memset(dst, 0, sizeof(T) * g.out_w);
            continue;
          }
          const T* src = x + (c * g.in_h + ih) * g.in_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            int iw = ow * g.stride - g.pad_w0 + kw;
            dst[ow] = (iw >= 0 && iw < g.in_w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a col matrix back into an image (adjoint of im2col).
template <typename T>
void col2im_add(const T* col, int ci, const ConvGeom& g, T* x) {
  const int p_total = g.out_h * g.out_w;
  for (int c = 0; c < ci; ++c) {
    for (int kh = 0; kh < g.k_h; ++kh) {
      for (int kw = 0; kw < g.k_w; ++kw) {
        const T* row = col + ((c * g.k_h + kh) * g.k_w + kw) * p_total;
        for (int oh = 0; oh < g.out_h; ++oh) {
          int ih = oh * g.stride - g.pad_h0 + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          T* dst = x + (c * g.in_h + ih) * g.in_w;
          const T* src = row + oh * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            int iw = ow * g.stride - g.pad_w0 + kw;
            if (iw >= 0 && iw < g.in_w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_fwd_serial(const T* x, const T* w, const ConvGeom& g, int n, int ci, int co, T* y) {
  const std::int64_t x_n = static_cast<std::int64_t>(ci) * g.in_h * g.in_w;
  const std::int64_t y_n = static_cast<std::int64_t>(co) * g.out_h * g.out_w;
  for (int e = 0; e < n; ++e) {
    const T* xe = x + e * x_n;
    T* ye = y + e * y_n;
    for (int f = 0; f < co; ++f) {
      for (int oh = 0; oh < g.out_h; ++oh) {
        for (int ow = 0; ow < g.out_w; ++ow) {
          double acc = 0.0;
          for (int c = 0; c < ci; ++c) {
            for (int kh = 0; kh < g.k_h; ++kh) {
              int ih = oh * g.stride - g.pad_h0 + kh;
              if (ih < 0 || ih >= g.in_h) continue;
              for (int kw = 0; kw < g.k_w; ++kw) {
                int iw = ow * g.stride - g.pad_w0 + kw;
                if (iw < 0 || iw >= g.in_w) continue;
                acc += static_cast<double>(w[((f * ci + c) * g.k_h + kh) * g.k_w + kw]) *
                       static_cast<double>(xe[(c * g.in_h + ih) * g.in_w + iw]);
              }
            }
          }
          ye[(f * g.out_h + oh) * g.out_w + ow] = static_cast<T>(acc);
        }
      }
    }
  }
}

template <typename T>
void conv_dbwd_serial(const T* gy, const T* w, const ConvGeom& g, int n, int ci, int co, T* dx) {
  const std::int64_t x_n = static_cast<std::int64_t>(ci) * g.in_h * g.in_w;
  const std::int64_t y_n = static_cast<std::int64_t>(co) * g.out_h * g.out_w;
  std::memset(dx, 0, sizeof(T) * n * x_n);
  for (int e = 0; e < n; ++e) {
    const T* ge = gy + e * y_n;
    T* de = dx + e * x_n;
    for (int f = 0; f < co; ++f) {
      for (int oh = 0; oh < g.out_h; ++oh) {
        for (int ow = 0; ow < g.out_w; ++ow) {
          T gv = ge[(f * g.out_h + oh) * g.out_w + ow];
          if (gv == T(0)) continue;
          for (int c = 0; c < ci; ++c) {
            for (int kh = 0; kh < g.k_h; ++kh) {
              int ih = oh * g.stride - g.pad_h0 + kh;
              if (ih < 0 || ih >= g.in_h) continue;
              for (int kw = 0; kw < g.k_w; ++kw) {
                int iw = ow * g.stride - g.pad_w0 + kw;
                if (iw < 0 || iw >= g.in_w) continue;
                de[(c * g.in_h + ih) * g.in_w + iw] +=
                    gv * w[((f * ci + c) * g.k_h + kh) * g.k_w + kw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_wbwd_serial(const T* x, const T* gy, const ConvGeom& g, int n, int ci, int co, T* dw) {
  const std::int64_t x_n = static_cast<std::int64_t>(ci) * g.in_h * g.in_w;
  const std::int64_t y_n = static_cast<std::int64_t>(co) * g.out_h * g.out_w;
  const std::int64_t w_n = static_cast<std::int64_t>(co) * ci * g.k_h * g.k_w;
  std::memset(dw, 0, sizeof(T) * w_n);
  for (int e = 0; e < n; ++e) {
    const T* xe = x + e * x_n;
    const T* ge = gy + e * y_n;
    for (int f = 0; f < co; ++f) {
      for (int c = 0; c < ci; ++c) {
        for (int kh = 0; kh < g.k_h; ++kh) {
          for (int kw = 0; kw < g.k_w; ++kw) {
            double acc = 0.0;
            for (int oh = 0; oh < g.out_h; ++oh) {
              int ih = oh * g.stride - g.pad_h0 + kh;
              if (ih < 0 || ih >= g.in_h) continue;
              for (int ow = 0; ow < g.out_w; ++ow) {
                int iw = ow * g.stride - g.pad_w0 + kw;
                if (iw < 0 || iw >= g.in_w) continue;
                acc += static_cast<double>(ge[(f * g.out_h + oh) * g.out_w + ow]) *
                       static_cast<double>(xe[(c * g.in_h + ih) * g.in_w + iw]);
              }
            }
            dw[((f * ci + c) * g.k_h + kh) * g.k_w + kw] += static_cast<T>(acc);
          }
        }
      }
    }
  }
}

}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

ConvGeom ConvGeom::from_output_target(int in_h, int in_w, int k, int stride, int out_h, int out_w) {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_h = out_h;
  g.out_w = out_w;
  g.k_h = k;
  g.k_w = k;
  g.stride = stride;
  int pad_h = (out_h - 1) * stride + k - in_h;
  int pad_w = (out_w - 1) * stride + k - in_w;
  if (pad_h < 0 || pad_w < 0)
    throw std::invalid_argument("ConvGeom: output target too small for input");
  g.pad_h0 = pad_h / 2;
  g.pad_w0 = pad_w / 2;
  return g;
}

template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb,
          T beta, T* c, int ldc) {
  if (backend() == Backend::kSerial) {
    gemm_serial(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    cblas_gemm_impl(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

template <typename T>
void conv2d_fwd(const Array<T>& x, const Array<T>& w, const ConvGeom& g, Array<T>& y) {
  const int n = x.dim(0), ci = x.dim(1), co = w.dim(0);
  if (backend() == Backend::kSerial) {
    conv_fwd_serial(x.data(), w.data(), g, n, ci, co, y.data());
    return;
  }
  const int kk = ci * g.k_h * g.k_w;
  const int p = g.out_h * g.out_w;
  const std::int64_t x_n = static_cast<std::int64_t>(ci) * g.in_h * g.in_w;
  const std::int64_t y_n = static_cast<std::int64_t>(co) * p;
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(kk) * p);
#pragma omp for schedule(static)
    for (int e = 0; e < n; ++e) {
      im2col(x.data() + e * x_n, ci, g, col.data());
      cblas_gemm_impl(false, false, co, p, kk, T(1), w.data(), kk, col.data(), p, T(0),
                      y.data() + e * y_n, p);
    }
  }
}

template <typename T>
void conv2d_data_bwd(const Array<T>& gy, const Array<T>& w, const ConvGeom& g, Array<T>& dx) {
  const int n = gy.dim(0), co = gy.dim(1), ci = w.dim(1);
  if (backend() == Backend::kSerial) {
    conv_dbwd_serial(gy.data(), w.data(), g, n, ci, co, dx.data());
    return;
  }
  const int kk = ci * g.k_h * g.k_w;
  const int p = g.out_h * g.out_w;
  const std::int64_t x_n = static_cast<std::int64_t>(ci) * g.in_h * g.in_w;
  const std::int64_t y_n = static_cast<std::int64_t>(co) * p;
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(kk) * p);
#pragma omp for schedule(static)
    for (int e = 0; e < n; ++e) {
      // colgrad = w^T (kk x co) * gy_e (co x p)
      cblas_gemm_impl(true, false, kk, p, co, T(1), w.data(), kk, gy.data() + e * y_n, p, T(0),
                      col.data(), p);
      T* dxe = dx.data() + e * x_n;
      std::memset(dxe, 0, sizeof(T) * x_n);
      col2im_add(col.data(), ci, g, dxe);
    }
  }
}

template <typename T>
void conv2d_weight_bwd(const Array<T>& x, const Array<T>& gy, const ConvGeom& g, Array<T>& dw) {
  const int n = x.dim(0), ci = x.dim(1), co = gy.dim(1);
  if (backend() == Backend::kSerial) {
    conv_wbwd_serial(x.data(), gy.data(), g, n, ci, co, dw.data());
    return;
  }
  const int kk = ci * g.k_h * g.k_w;
  const int p = g.out_h * g.out_w;
  const std::int64_t x_n = static_cast<std::int64_t>(ci) * g.in_h * g.in_w;
  const std::int64_t y_n = static_cast<std::int64_t>(co) * p;
  const std::int64_t w_n = static_cast<std::int64_t>(co) * kk;
  const int slots = std::min(kWgradSlots, n);
  std::vector<std::vector<T>> acc(slots);
#pragma omp parallel for schedule(static)
  for (int s = 0; s < slots; ++s) {
    acc[s].assign(w_n, T(0));
    std::vector<T> col(static_cast<size_t>(kk) * p);
    for (int e = s; e < n; e += slots) {
      im2col(x.data() + e * x_n, ci, g, col.data());
      // dw += gy_e (co x p) * col^T (p x kk)
      cblas_gemm_impl(false, true, co, kk, p, T(1), gy.data() + e * y_n, p, col.data(), p, T(1),
                      acc[s].data(), kk);
    }
  }
  std::memset(dw.data(), 0, sizeof(T) * w_n);
  for (int s = 0; s < slots; ++s) vadd(dw.data(), acc[s].data(), dw.data(), w_n);
}

template <typename T>
void map_relu(const T* x, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void map_leaky_relu(const T* x, T* y, std::int64_t n, T slope) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void map_mask_positive(const T* x, T* m, std::int64_t n, T negative_value) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) m[i] = x[i] > T(0) ? T(1) : negative_value;
}

template <typename T>
void vadd(const T* a, const T* b, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void vsub(const T* a, const T* b, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void vmul(const T* a, const T* b, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
void vdiv(const T* a, const T* b, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] / b[i];
}

template <typename T>
void vscale(const T* a, T s, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = s * a[i];
}

template <typename T>
void vaxpy(T alpha, const T* x, T* y, std::int64_t n) {
  const bool par = backend() == Backend::kParallel && n > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
double reduce_sum(const T* x, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <typename T>
double reduce_sumsq(const T* x, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

namespace {

// Pads a shape to rank 4 on the left: (a,b) -> (1,1,a,b).
inline void pad4(const Shape& s, int out[4]) {
  out[0] = out[1] = out[2] = out[3] = 1;
  int off = 4 - static_cast<int>(s.size());
  for (size_t i = 0; i < s.size(); ++i) out[off + i] = s[i];
}

template <typename T, typename Op>
void broadcast_binary(const Array<T>& a, const Array<T>& b, Array<T>& y, Op op) {
  int as[4], bs[4];
  pad4(a.shape(), as);
  pad4(b.shape(), bs);
  for (int d = 0; d < 4; ++d) {
    if (bs[d] != as[d] && bs[d] != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
  }
  std::int64_t bstr[4];
  std::int64_t st = 1;
  for (int d = 3; d >= 0; --d) {
    bstr[d] = (bs[d] == 1) ? 0 : st;
    st *= bs[d];
  }
  const T* ap = a.data();
  const T* bp = b.data();
  T* yp = y.data();
  const std::int64_t inner = static_cast<std::int64_t>(as[2]) * as[3];
  const std::int64_t outer = static_cast<std::int64_t>(as[0]) * as[1];
  const bool par = backend() == Backend::kParallel && a.size() > 16384;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t o = 0; o < outer; ++o) {
    int i0 = static_cast<int>(o / as[1]);
    int i1 = static_cast<int>(o % as[1]);
    const std::int64_t abase = o * inner;
    const std::int64_t bbase = i0 * bstr[0] + i1 * bstr[1];
    std::int64_t ai = abase;
    for (int i2 = 0; i2 < as[2]; ++i2) {
      std::int64_t brow = bbase + i2 * bstr[2];
      for (int i3 = 0; i3 < as[3]; ++i3, ++ai) {
        yp[ai] = op(ap[ai], bp[brow + i3 * bstr[3]]);
      }
    }
  }
}

}  // namespace

template <typename T>
void broadcast_add(const Array<T>& a, const Array<T>& b, Array<T>& y) {
  broadcast_binary(a, b, y, [](T p, T q) { return p + q; });
}

template <typename T>
void broadcast_mul(const Array<T>& a, const Array<T>& b, Array<T>& y) {
  broadcast_binary(a, b, y, [](T p, T q) { return p * q; });
}

template <typename T>
void reduce_to(const Array<T>& g, Array<T>& out) {
  int gs[4], os[4];
  pad4(g.shape(), gs);
  pad4(out.shape(), os);
  std::int64_t ostr[4];
  std::int64_t st = 1;
  for (int d = 3; d >= 0; --d) {
    ostr[d] = (os[d] == 1) ? 0 : st;
    st *= os[d];
  }
  std::vector<double> acc(out.size(), 0.0);
  const T* gp = g.data();
  std::int64_t gi = 0;
  for (int i0 = 0; i0 < gs[0]; ++i0)
    for (int i1 = 0; i1 < gs[1]; ++i1)
      for (int i2 = 0; i2 < gs[2]; ++i2) {
        std::int64_t obase = i0 * ostr[0] + i1 * ostr[1] + i2 * ostr[2];
        for (int i3 = 0; i3 < gs[3]; ++i3, ++gi) acc[obase + i3 * ostr[3]] += gp[gi];
      }
  T* op_ = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) op_[i] = static_cast<T>(acc[i]);
}

void fft_inplace(Complex* data, int n, bool inverse) {
  if (n <= 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  // bit reversal
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / len * (inverse ? 1.0 : -1.0);
    Complex wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        Complex u = data[i + j];
        Complex v = data[i + j + len / 2] * w;
        data[i + j] = u + v;
        data[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (int i = 0; i < n; ++i) data[i] /= static_cast<double>(n);
  }
}

void fft_rows(std::vector<std::vector<Complex>>& frames, bool inverse) {
  const bool par = backend() == Backend::kParallel && frames.size() > 1;
  const int n = static_cast<int>(frames.size());
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < n; ++i) {
    fft_inplace(frames[i].data(), static_cast<int>(frames[i].size()), inverse);
  }
}

#define SSEP_INSTANTIATE_KERNELS(T)                                                              \
  template void conv2d_fwd<T>(const Array<T>&, const Array<T>&, const ConvGeom&, Array<T>&);     \
  template void conv2d_data_bwd<T>(const Array<T>&, const Array<T>&, const ConvGeom&,            \
                                   Array<T>&);                                                   \
  template void conv2d_weight_bwd<T>(const Array<T>&, const Array<T>&, const ConvGeom&,          \
                                     Array<T>&);                                                 \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, int, const T*, int, T, T*, int); \
  template void map_relu<T>(const T*, T*, std::int64_t);                                         \
  template void map_leaky_relu<T>(const T*, T*, std::int64_t, T);                                \
  template void map_mask_positive<T>(const T*, T*, std::int64_t, T);                             \
  template void vadd<T>(const T*, const T*, T*, std::int64_t);                                   \
  template void vsub<T>(const T*, const T*, T*, std::int64_t);                                   \
  template void vmul<T>(const T*, const T*, T*, std::int64_t);                                   \
  template void vdiv<T>(const T*, const T*, T*, std::int64_t);                                   \
  template void vscale<T>(const T*, T, T*, std::int64_t);                                        \
  template void vaxpy<T>(T, const T*, T*, std::int64_t);                                         \
  template double reduce_sum<T>(const T*, std::int64_t);                                         \
  template double reduce_sumsq<T>(const T*, std::int64_t);                                       \
  template void broadcast_add<T>(const Array<T>&, const Array<T>&, Array<T>&);                   \
  template void broadcast_mul<T>(const Array<T>&, const Array<T>&, Array<T>&);                   \
  template void reduce_to<T>(const Array<T>&, Array<T>&);

SSEP_INSTANTIATE_KERNELS(float)
SSEP_INSTANTIATE_KERNELS(double)

#undef SSEP_INSTANTIATE_KERNELS

}  // namespace ssep::kernels
