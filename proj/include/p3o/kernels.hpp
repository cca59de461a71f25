#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "p3o/tensor.hpp"

namespace p3o {

inline constexpr int kConvKernel = 4;
inline constexpr int kConvStride = 2;
inline constexpr double kLogStdMin = -2.995732273553991;  // ln 0.05
inline constexpr double kLogStdMax = 0.6931471805599453;  // ln 2
inline constexpr double kHalfLog2Pi = 0.9189385332046727;
inline constexpr double kHalfLog2PiE = 1.4189385332046727;

inline int conv_out_extent(int in) {
  require(in >= kConvKernel, "conv2d input extent " + std::to_string(in) +
                                 " is below the kernel size 4");
  return (in - kConvKernel) / kConvStride + 1;
}

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// ---------------------------------------------------------------------------
// conv2d, kernel 4x4, stride 2, no padding.
//
// Forward lowers the input to a column matrix (K x N with K = Cin*16 and
// N = B*Hp*Wp) and runs one GEMM per call. The cache keeps the column matrix
// for the weight-gradient GEMM in the backward pass.
// ---------------------------------------------------------------------------

template <class T>
struct Conv2dCache {
  int B = 0, Cin = 0, H = 0, W = 0, Cout = 0, Hp = 0, Wp = 0;
  std::vector<T> cols;  // K x N, col-major
  std::vector<T> ymat;  // Cout x N scratch, reused for dy in backward
};

template <class T>
void im2col(const T* x, int B, int Cin, int H, int W, int Hp, int Wp, T* cols) {
  const int K = Cin * kConvKernel * kConvKernel;
  for (int b = 0; b < B; ++b) {
    const T* xb = x + int64_t(b) * Cin * H * W;
    for (int i = 0; i < Hp; ++i) {
      for (int j = 0; j < Wp; ++j) {
        T* col = cols + int64_t((b * Hp + i) * Wp + j) * K;
        for (int c = 0; c < Cin; ++c) {
          const T* xc = xb + (int64_t(c) * H + i * kConvStride) * W + j * kConvStride;
          for (int dy = 0; dy < kConvKernel; ++dy) {
            const T* row = xc + int64_t(dy) * W;
            col[0] = row[0];
            col[1] = row[1];
            col[2] = row[2];
            col[3] = row[3];
            col += 4;
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, int B, int Cin, int H, int W, int Hp, int Wp, T* dx) {
  const int K = Cin * kConvKernel * kConvKernel;
  for (int b = 0; b < B; ++b) {
    T* xb = dx + int64_t(b) * Cin * H * W;
    for (int i = 0; i < Hp; ++i) {
      for (int j = 0; j < Wp; ++j) {
        const T* col = cols + int64_t((b * Hp + i) * Wp + j) * K;
        for (int c = 0; c < Cin; ++c) {
          T* xc = xb + (int64_t(c) * H + i * kConvStride) * W + j * kConvStride;
          for (int dy = 0; dy < kConvKernel; ++dy) {
            T* row = xc + int64_t(dy) * W;
            row[0] += col[0];
            row[1] += col[1];
            row[2] += col[2];
            row[3] += col[3];
            col += 4;
          }
        }
      }
    }
  }
}

// x: [B,Cin,H,W], w: [Cout,Cin,4,4], b: [Cout] -> y: [B,Cout,Hp,Wp]
template <class T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                    TensorT<T>& y, Conv2dCache<T>& cache) {
  require(x.ndim() == 4, "conv2d input must be [B,Cin,H,W], got " + shape_str(x.shape));
  require(w.ndim() == 4 && w.dim(2) == kConvKernel && w.dim(3) == kConvKernel,
          "conv2d weight must be [Cout,Cin,4,4], got " + shape_str(w.shape));
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0);
  require(w.dim(1) == Cin, "conv2d channel mismatch: input Cin=" + std::to_string(Cin) +
                               " but weight Cin=" + std::to_string(w.dim(1)));
  require(bias.ndim() == 1 && bias.dim(0) == Cout,
          "conv2d bias must be [Cout], got " + shape_str(bias.shape));
  const int Hp = conv_out_extent(H), Wp = conv_out_extent(W);

  cache.B = B;
  cache.Cin = Cin;
  cache.H = H;
  cache.W = W;
  cache.Cout = Cout;
  cache.Hp = Hp;
  cache.Wp = Wp;
  const int K = Cin * kConvKernel * kConvKernel;
  const int64_t N = int64_t(B) * Hp * Wp;
  cache.cols.resize(size_t(K * N));
  cache.ymat.resize(size_t(Cout * N));
  im2col(x.data.data(), B, Cin, H, W, Hp, Wp, cache.cols.data());

  // row-major [Cout,K] weight buffer viewed as col-major K x Cout
  ConstMatMap<T> wt(w.data.data(), K, Cout);
  ConstMatMap<T> cols(cache.cols.data(), K, N);
  MatMap<T> ym(cache.ymat.data(), Cout, N);
  ym.noalias() = wt.transpose() * cols;

  y.shape = {B, Cout, Hp, Wp};
  y.data.resize(size_t(N) * Cout);
  const int hw = Hp * Wp;
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      const T bv = bias.data[size_t(co)];
      T* yrow = y.data.data() + (int64_t(b) * Cout + co) * hw;
      const T* src = cache.ymat.data() + co;
      const T* base = src + int64_t(b) * hw * Cout;
      for (int n = 0; n < hw; ++n) yrow[n] = base[int64_t(n) * Cout] + bv;
    }
  }
}

// dy: [B,Cout,Hp,Wp]. dx (when requested) is assigned; dw/db accumulate into
// the provided grad buffers.
template <class T>
void conv2d_backward(const TensorT<T>& dy, const TensorT<T>& w, Conv2dCache<T>& cache,
                     TensorT<T>* dx, std::vector<T>* dw, std::vector<T>* db) {
  const int B = cache.B, Cin = cache.Cin, H = cache.H, W = cache.W;
  const int Cout = cache.Cout, Hp = cache.Hp, Wp = cache.Wp;
  require(dy.shape == std::vector<int>({B, Cout, Hp, Wp}),
          "conv2d backward dy shape " + shape_str(dy.shape) + " does not match forward");
  const int K = Cin * kConvKernel * kConvKernel;
  const int64_t N = int64_t(B) * Hp * Wp;
  const int hw = Hp * Wp;

  // gather dy into Cout x N
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      const T* src = dy.data.data() + (int64_t(b) * Cout + co) * hw;
      T* dst = cache.ymat.data() + int64_t(b) * hw * Cout + co;
      for (int n = 0; n < hw; ++n) dst[int64_t(n) * Cout] = src[n];
    }
  }
  ConstMatMap<T> dym(cache.ymat.data(), Cout, N);
  ConstMatMap<T> cols(cache.cols.data(), K, N);

  if (dw != nullptr) {
    require(int64_t(dw->size()) == int64_t(Cout) * K, "conv2d dw buffer size mismatch");
    MatMap<T> dwt(dw->data(), K, Cout);
    dwt.noalias() += cols * dym.transpose();
  }
  if (db != nullptr) {
    require(int(db->size()) == Cout, "conv2d db buffer size mismatch");
    VecMap<T>(db->data(), Cout) += dym.rowwise().sum();
  }
  if (dx != nullptr) {
    std::vector<T> dcols(size_t(K * N));
    ConstMatMap<T> wt(w.data.data(), K, Cout);
    MatMap<T>(dcols.data(), K, N).noalias() = wt * dym;
    dx->shape = {B, Cin, H, W};
    dx->data.assign(size_t(int64_t(B) * Cin * H * W), T(0));
    col2im_add(dcols.data(), B, Cin, H, W, Hp, Wp, dx->data.data());
  }
}

// ---------------------------------------------------------------------------
// linear: y = x w^T + b with x [B,N], w [M,N], b [M]
// ---------------------------------------------------------------------------

template <class T>
void linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                    TensorT<T>& y) {
  require(x.ndim() == 2, "linear input must be [B,N], got " + shape_str(x.shape));
  require(w.ndim() == 2, "linear weight must be [M,N], got " + shape_str(w.shape));
  const int B = x.dim(0), N = x.dim(1), M = w.dim(0);
  require(w.dim(1) == N, "linear dimension mismatch: input N=" + std::to_string(N) +
                             " but weight N=" + std::to_string(w.dim(1)));
  require(bias.ndim() == 1 && bias.dim(0) == M,
          "linear bias must be [M], got " + shape_str(bias.shape));

  y.shape = {B, M};
  y.data.resize(size_t(B) * M);
  ConstMatMap<T> xc(x.data.data(), N, B);
  ConstMatMap<T> wc(w.data.data(), N, M);
  MatMap<T> yc(y.data.data(), M, B);
  yc.noalias() = wc.transpose() * xc;
  yc.colwise() += ConstVecMap<T>(bias.data.data(), M);
}

template <class T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                     TensorT<T>* dx, std::vector<T>* dw, std::vector<T>* db) {
  const int B = x.dim(0), N = x.dim(1), M = w.dim(0);
  require(dy.shape == std::vector<int>({B, M}),
          "linear backward dy shape " + shape_str(dy.shape) + " does not match forward");
  ConstMatMap<T> xc(x.data.data(), N, B);
  ConstMatMap<T> wc(w.data.data(), N, M);
  ConstMatMap<T> dyc(dy.data.data(), M, B);

  if (dw != nullptr) {
    require(int64_t(dw->size()) == int64_t(M) * N, "linear dw buffer size mismatch");
    MatMap<T>(dw->data(), N, M).noalias() += xc * dyc.transpose();
  }
  if (db != nullptr) {
    require(int(db->size()) == M, "linear db buffer size mismatch");
    VecMap<T>(db->data(), M) += dyc.rowwise().sum();
  }
  if (dx != nullptr) {
    dx->shape = {B, N};
    dx->data.resize(size_t(B) * N);
    MatMap<T>(dx->data.data(), N, B).noalias() = wc * dyc;
  }
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <class T>
void relu_forward(const TensorT<T>& x, TensorT<T>& y) {
  y.shape = x.shape;
  y.data.resize(x.data.size());
  for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
}

// Subgradient 0 at 0: upstream is masked wherever the pre-activation <= 0.
template <class T>
void relu_backward(const TensorT<T>& x_pre, const TensorT<T>& dy, TensorT<T>& dx) {
  require(x_pre.shape == dy.shape, "relu backward shape mismatch");
  dx.shape = x_pre.shape;
  dx.data.resize(x_pre.data.size());
  for (size_t i = 0; i < x_pre.data.size(); ++i)
    dx.data[i] = x_pre.data[i] > T(0) ? dy.data[i] : T(0);
}

// ---------------------------------------------------------------------------
// softmax cross-entropy over one logit row
// ---------------------------------------------------------------------------

template <class T>
void softmax_row(const T* logits, int K, T* probs) {
  T mx = logits[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, logits[k]);
  T sum = T(0);
  for (int k = 0; k < K; ++k) {
    probs[k] = std::exp(logits[k] - mx);
    sum += probs[k];
  }
  const T inv = T(1) / sum;
  for (int k = 0; k < K; ++k) probs[k] *= inv;
}

// loss = -ln softmax(logits)[target], computed with max subtraction.
template <class T>
T softmax_cross_entropy(const T* logits, int K, int target, T* probs_out = nullptr) {
  require(target >= 0 && target < K,
          "class index " + std::to_string(target) + " out of range [0," + std::to_string(K) + ")");
  T mx = logits[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, logits[k]);
  T sum = T(0);
  for (int k = 0; k < K; ++k) sum += std::exp(logits[k] - mx);
  const T loss = std::log(sum) - (logits[target] - mx);
  if (probs_out != nullptr) {
    const T inv = T(1) / sum;
    for (int k = 0; k < K; ++k) probs_out[k] = std::exp(logits[k] - mx) * inv;
  }
  return loss;
}

inline double softmax_cross_entropy(const TensorD& logits, int target) {
  require(logits.ndim() == 1, "softmax_cross_entropy expects a logit vector");
  return softmax_cross_entropy(logits.data.data(), logits.dim(0), target);
}

// dlogits = upstream * (softmax(logits) - onehot(target))
template <class T>
void softmax_cross_entropy_backward(const T* logits, int K, int target, T upstream, T* dlogits) {
  softmax_row(logits, K, dlogits);
  dlogits[target] -= T(1);
  for (int k = 0; k < K; ++k) dlogits[k] *= upstream;
}

// ---------------------------------------------------------------------------
// diagonal Gaussian head; log_std is clamped to [ln 0.05, ln 2]
// ---------------------------------------------------------------------------

template <class T>
struct GaussianOut {
  T log_prob = T(0);
  T entropy = T(0);
};

template <class T>
T clamp_log_std(T v) {
  return std::min(std::max(v, T(kLogStdMin)), T(kLogStdMax));
}

template <class T>
GaussianOut<T> gaussian_head(const T* mean, const T* log_std, const T* action, int D) {
  GaussianOut<T> out;
  for (int d = 0; d < D; ++d) {
    const T ls = clamp_log_std(log_std[d]);
    const T inv_sigma = std::exp(-ls);
    const T z = (action[d] - mean[d]) * inv_sigma;
    out.log_prob += T(-0.5) * z * z - ls - T(kHalfLog2Pi);
    out.entropy += ls + T(kHalfLog2PiE);
  }
  return out;
}

// Accumulates d(dlp*log_prob + dent*entropy) into dmean / dlog_std.
// The log_std gradient is zero where the clamp is active.
template <class T>
void gaussian_head_backward(const T* mean, const T* log_std, const T* action, int D, T dlp,
                            T dent, T* dmean, T* dlog_std) {
  for (int d = 0; d < D; ++d) {
    const T ls = clamp_log_std(log_std[d]);
    const T inv_var = std::exp(T(-2) * ls);
    const T diff = action[d] - mean[d];
    if (dmean != nullptr) dmean[d] += dlp * diff * inv_var;
    if (dlog_std != nullptr) {
      const bool interior = log_std[d] > T(kLogStdMin) && log_std[d] < T(kLogStdMax);
      if (interior) dlog_std[d] += dlp * (diff * diff * inv_var - T(1)) + dent;
    }
  }
}

// ---------------------------------------------------------------------------
// clip(mu, alpha, beta) = max(min(mu, beta), alpha)
// ---------------------------------------------------------------------------

template <class T>
T clip(T mu, T alpha, T beta) {
  require(alpha <= beta, "clip requires alpha <= beta");
  return std::max(std::min(mu, beta), alpha);
}

}  // namespace p3o
