#ifndef STAINNORM_PAC_HPP
#define STAINNORM_PAC_HPP

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "stainnorm/errors.hpp"
#include "stainnorm/tensor.hpp"

namespace stainnorm {

// How the affinity factor K(f_i, f_j) is produced. constant_one turns the
// layer into a plain convolution.
enum class AffinityMode { kGaussian, kConstantOne };

// Static description of one pixel-adaptive convolution layer. Stride is
// fixed to 1 and padding always preserves the spatial size.
struct PACLayerSpec {
  int kernel_size = 3;
  int in_channels = 0;
  int out_channels = 0;
  double sigma_init = 1.0;
  AffinityMode affinity_mode = AffinityMode::kGaussian;

  int padding() const { return (kernel_size - 1) / 2; }

  void validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
      throw InvalidParameter("kernel_size must be a positive odd integer");
    }
    if (in_channels < 1 || out_channels < 1) {
      throw InvalidParameter("channel counts must be >= 1");
    }
    if (!(sigma_init > 0.0)) {
      throw InvalidParameter("sigma_init must be positive");
    }
  }
};

// Per-pixel affinity values K(f_i, f_j) over each k x k window, H x W x k x k.
template <typename T>
struct AffinityWindow {
  Tensor<T> values;
};

template <typename T>
struct PACGradients {
  Tensor<T> input;     // H x W x Cin
  Tensor<T> guidance;  // H x W x D
  Tensor<T> weights;   // k x k x Cin x Cout
  Tensor<T> bias;      // Cout
  Tensor<T> sigma;     // Cout
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRM = Eigen::Map<const RowMat<T>>;

// Copies an H x W x C grid into an (H+2p) x (W+2p) x C zero-padded buffer.
template <typename T>
inline std::vector<T> zero_pad(const Tensor<T>& x, int pad) {
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const int wp = w + 2 * pad;
  std::vector<T> out(static_cast<std::size_t>((h + 2 * pad)) * wp * c, T(0));
  for (int y = 0; y < h; ++y) {
    const T* src = x.data() + static_cast<std::int64_t>(y) * w * c;
    T* dst = out.data() + (static_cast<std::int64_t>(y + pad) * wp + pad) * c;
    std::copy(src, src + static_cast<std::int64_t>(w) * c, dst);
  }
  return out;
}

}  // namespace detail

// Squared guidance distances ||f_i - f_j||^2 for every window offset,
// H x W x k*k. Out-of-image neighbours use zero-padded guidance.
template <typename T>
Tensor<T> window_sqdist(const Tensor<T>& guidance, int kernel_size) {
  const int h = guidance.dim(0), w = guidance.dim(1), d = guidance.dim(2);
  const int p = (kernel_size - 1) / 2;
  const int wp = w + 2 * p;
  const std::vector<T> padded = detail::zero_pad(guidance, p);
  Tensor<T> out({h, w, kernel_size * kernel_size});
  for (int dy = -p; dy <= p; ++dy) {
    for (int dx = -p; dx <= p; ++dx) {
      const int off = (dy + p) * kernel_size + (dx + p);
      for (int y = 0; y < h; ++y) {
        const T* gi = guidance.data() + static_cast<std::int64_t>(y) * w * d;
        const T* gj = padded.data() + (static_cast<std::int64_t>(y + dy + p) * wp + dx + p) * d;
        T* o = out.data() + (static_cast<std::int64_t>(y) * w) * kernel_size * kernel_size + off;
        for (int x = 0; x < w; ++x) {
          T acc = T(0);
          for (int c = 0; c < d; ++c) {
            const T diff = gi[x * d + c] - gj[x * d + c];
            acc += diff * diff;
          }
          o[static_cast<std::int64_t>(x) * kernel_size * kernel_size] = acc;
        }
      }
    }
  }
  return out;
}

// Backward of window_sqdist: routes d(loss)/d(d2) into guidance. Both the
// centre pixel i and the (in-image) neighbour j receive contributions.
template <typename T>
Tensor<T> window_sqdist_backward(const Tensor<T>& guidance, int kernel_size,
                                 const Tensor<T>& d_d2) {
  const int h = guidance.dim(0), w = guidance.dim(1), d = guidance.dim(2);
  const int p = (kernel_size - 1) / 2;
  const int k2 = kernel_size * kernel_size;
  Tensor<T> grad({h, w, d});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T* gi = &guidance.at(y, x, 0);
      for (int dy = -p; dy <= p; ++dy) {
        for (int dx = -p; dx <= p; ++dx) {
          const int off = (dy + p) * kernel_size + (dx + p);
          const T gd = d_d2[(static_cast<std::int64_t>(y) * w + x) * k2 + off];
          if (gd == T(0)) continue;
          const int yj = y + dy, xj = x + dx;
          const bool inside = yj >= 0 && yj < h && xj >= 0 && xj < w;
          const T* gj = inside ? &guidance.at(yj, xj, 0) : nullptr;
          for (int c = 0; c < d; ++c) {
            const T diff = gi[c] - (inside ? gj[c] : T(0));
            grad.at(y, x, c) += T(2) * diff * gd;
            if (inside) grad.at(yj, xj, c) -= T(2) * diff * gd;
          }
        }
      }
    }
  }
  return grad;
}

// Gaussian feature affinity, Eq.-style exp(-||f_i - f_j||^2 / (2 sigma^2))
// with a single sigma taken from spec.sigma_init.
template <typename T>
AffinityWindow<T> gaussian_affinity(const FeatureGrid<T>& guidance, const PACLayerSpec& spec) {
  spec.validate();
  if (spec.affinity_mode != AffinityMode::kGaussian) {
    throw InvalidParameter("gaussian_affinity requires affinity_mode = gaussian");
  }
  if (!guidance.data.all_finite()) throw InvalidInput("guidance contains non-finite values");
  const int h = guidance.data.dim(0), w = guidance.data.dim(1);
  const int k = spec.kernel_size;
  const Tensor<T> d2 = window_sqdist(guidance.data, k);
  const T inv = static_cast<T>(1.0 / (2.0 * spec.sigma_init * spec.sigma_init));
  AffinityWindow<T> out;
  out.values = Tensor<T>({h, w, k, k});
  for (std::int64_t i = 0; i < d2.numel(); ++i) {
    out.values[i] = std::exp(-d2[i] * inv);
  }
  return out;
}

namespace detail {

// Expands a scalar or per-filter sigma into a Cout-sized vector of
// 1 / (2 sigma_o^2) factors.
template <typename T>
inline std::vector<T> inv_two_sigma_sq(const PACLayerSpec& spec, const Tensor<T>& sigmas) {
  std::vector<T> inv(static_cast<std::size_t>(spec.out_channels));
  for (int o = 0; o < spec.out_channels; ++o) {
    const double s = sigmas.numel() > 0 ? static_cast<double>(sigmas[o]) : spec.sigma_init;
    if (!(s > 0.0)) throw InvalidParameter("sigma must be positive");
    inv[static_cast<std::size_t>(o)] = static_cast<T>(1.0 / (2.0 * s * s));
  }
  return inv;
}

}  // namespace detail

// Pixel-adaptive convolution forward pass:
//   v'_i = sum_{j in window} K(f_i, f_j) W[p_i - p_j] v_j + b
// computed per output channel with zero padding; spatial size is preserved.
// `sigmas` holds one sigma per output filter; empty falls back to
// spec.sigma_init for every filter. In constant_one mode the guidance is
// ignored and the result is exactly a standard convolution.
template <typename T>
Tensor<T> pac_forward(const Tensor<T>& input, const Tensor<T>& guidance,
                      const PACLayerSpec& spec, const Tensor<T>& weights,
                      const Tensor<T>& bias, const Tensor<T>& sigmas = {}) {
  spec.validate();
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int k = spec.kernel_size, p = spec.padding();
  const int cout = spec.out_channels;
  const bool gaussian = spec.affinity_mode == AffinityMode::kGaussian;
  if (cin != spec.in_channels) throw ShapeMismatch("input channels disagree with spec");
  if (gaussian && (guidance.dim(0) != h || guidance.dim(1) != w)) {
    throw ShapeMismatch("guidance spatial size " + guidance.shape_str() +
                        " does not match input " + input.shape_str());
  }
  if (weights.rank() != 4 || weights.dim(0) != k || weights.dim(1) != k ||
      weights.dim(2) != cin || weights.dim(3) != cout) {
    throw ShapeMismatch("weights must be k x k x Cin x Cout");
  }

  Tensor<T> d2;
  if (gaussian) d2 = window_sqdist(guidance, k);
  return pac_forward_from_sqdist(input, gaussian ? &d2 : nullptr, spec, weights, bias, sigmas);
}

// Forward pass given precomputed squared distances (shared across the
// layers of a block). d2 == nullptr selects the standard-convolution path.
template <typename T>
Tensor<T> pac_forward_from_sqdist(const Tensor<T>& input, const Tensor<T>* d2,
                                  const PACLayerSpec& spec, const Tensor<T>& weights,
                                  const Tensor<T>& bias, const Tensor<T>& sigmas = {}) {
  using detail::CMapRM;
  using detail::MapRM;
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int k = spec.kernel_size, p = spec.padding();
  const int k2 = k * k;
  const int cout = spec.out_channels;
  const int wp = w + 2 * p;
  const std::vector<T> padded = detail::zero_pad(input, p);

  Tensor<T> out({h, w, cout});
  MapRM<T> y_all(out.data(), static_cast<std::int64_t>(h) * w, cout);
  for (std::int64_t i = 0; i < y_all.rows(); ++i) {
    for (int o = 0; o < cout; ++o) y_all(i, o) = bias[o];
  }

  std::vector<T> inv2s;
  Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> e_buf, p_buf;
  if (d2 != nullptr) {
    inv2s = detail::inv_two_sigma_sq(spec, sigmas);
    e_buf.resize(static_cast<std::int64_t>(h) * w, cout);
    p_buf.resize(static_cast<std::int64_t>(h) * w, cout);
  }

  for (int dy = -p; dy <= p; ++dy) {
    for (int dx = -p; dx <= p; ++dx) {
      const int off = (dy + p) * k + (dx + p);
      CMapRM<T> w_off(weights.data() + static_cast<std::int64_t>(off) * cin * cout, cin, cout);
      if (d2 == nullptr) {
        for (int y = 0; y < h; ++y) {
          CMapRM<T> a(padded.data() + (static_cast<std::int64_t>(y + dy + p) * wp + dx + p) * cin, w, cin);
          y_all.middleRows(static_cast<std::int64_t>(y) * w, w).noalias() += a * w_off;
        }
      } else {
        for (int y = 0; y < h; ++y) {
          CMapRM<T> a(padded.data() + (static_cast<std::int64_t>(y + dy + p) * wp + dx + p) * cin, w, cin);
          p_buf.matrix().middleRows(static_cast<std::int64_t>(y) * w, w).noalias() = a * w_off;
        }
        // E[i, o] = exp(-d2[i, off] / (2 sigma_o^2))
        Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                   0, Eigen::InnerStride<>>
            d2_col(d2->data() + off, static_cast<std::int64_t>(h) * w, 1,
                   Eigen::InnerStride<>(k2));
        Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> inv_row(inv2s.data(), cout);
        e_buf = (-(d2_col.template replicate<1, Eigen::Dynamic>(1, cout)).rowwise() * inv_row).exp();
        y_all.array() += e_buf * p_buf;
      }
    }
  }
  return out;
}

// Analytic gradients of pac_forward with respect to every argument.
// `upstream` is d(loss)/d(output), shaped like the forward result.
template <typename T>
PACGradients<T> pac_gradients(const Tensor<T>& input, const Tensor<T>& guidance,
                              const PACLayerSpec& spec, const Tensor<T>& weights,
                              const Tensor<T>& bias, const Tensor<T>& sigmas,
                              const Tensor<T>& upstream) {
  using detail::CMapRM;
  using detail::MapRM;
  spec.validate();
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int k = spec.kernel_size, p = spec.padding();
  const int k2 = k * k;
  const int cout = spec.out_channels;
  const int wp = w + 2 * p;
  const bool gaussian = spec.affinity_mode == AffinityMode::kGaussian;
  if (!upstream.same_shape(Tensor<T>({h, w, cout}))) {
    throw ShapeMismatch("upstream gradient shape mismatch");
  }

  PACGradients<T> g;
  g.input = Tensor<T>({h, w, cin});
  g.guidance = Tensor<T>({guidance.rank() == 3 ? guidance.dim(0) : h,
                          guidance.rank() == 3 ? guidance.dim(1) : w,
                          guidance.rank() == 3 ? guidance.dim(2) : 1});
  g.weights = Tensor<T>({k, k, cin, cout});
  g.bias = Tensor<T>({cout});
  g.sigma = Tensor<T>({cout});

  CMapRM<T> dy_all(upstream.data(), static_cast<std::int64_t>(h) * w, cout);
  for (int o = 0; o < cout; ++o) g.bias[o] = dy_all.col(o).sum();

  const std::vector<T> padded = detail::zero_pad(input, p);
  std::vector<T> d_padded(padded.size(), T(0));

  Tensor<T> d2, d_d2;
  std::vector<T> inv2s;
  std::vector<double> sig(static_cast<std::size_t>(cout));
  if (gaussian) {
    d2 = window_sqdist(guidance, k);
    d_d2 = Tensor<T>({h, w, k2});
    inv2s = detail::inv_two_sigma_sq(spec, sigmas);
    for (int o = 0; o < cout; ++o) {
      sig[static_cast<std::size_t>(o)] =
          sigmas.numel() > 0 ? static_cast<double>(sigmas[o]) : spec.sigma_init;
    }
  }

  using ArrT = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  ArrT e_buf, p_buf, kdy;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  if (gaussian) {
    e_buf.resize(hw, cout);
    p_buf.resize(hw, cout);
  }
  kdy.resize(hw, cout);

  for (int dy = -p; dy <= p; ++dy) {
    for (int dx = -p; dx <= p; ++dx) {
      const int off = (dy + p) * k + (dx + p);
      CMapRM<T> w_off(weights.data() + static_cast<std::int64_t>(off) * cin * cout, cin, cout);
      MapRM<T> dw_off(g.weights.data() + static_cast<std::int64_t>(off) * cin * cout, cin, cout);

      if (gaussian) {
        Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                   0, Eigen::InnerStride<>>
            d2_col(d2.data() + off, hw, 1, Eigen::InnerStride<>(k2));
        Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> inv_row(inv2s.data(), cout);
        e_buf = (-(d2_col.template replicate<1, Eigen::Dynamic>(1, cout)).rowwise() * inv_row).exp();
        for (int y = 0; y < h; ++y) {
          CMapRM<T> a(padded.data() + (static_cast<std::int64_t>(y + dy + p) * wp + dx + p) * cin, w, cin);
          p_buf.matrix().middleRows(static_cast<std::int64_t>(y) * w, w).noalias() = a * w_off;
        }
        kdy = e_buf * dy_all.array();  // K o dY, the effective upstream per offset
        // dK = P o dY; feeds sigma and the squared-distance gradients.
        const ArrT dk = p_buf * dy_all.array();
        for (int o = 0; o < cout; ++o) {
          const double s = sig[static_cast<std::size_t>(o)];
          // dK/dsigma = K * d2 / sigma^3
          Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                     0, Eigen::InnerStride<>>
              d2_col_o(d2.data() + off, hw, 1, Eigen::InnerStride<>(k2));
          g.sigma[o] += static_cast<T>(
              ((dk.col(o) * e_buf.col(o) * d2_col_o.col(0)).sum()) / static_cast<T>(s * s * s));
        }
        // d(d2)[i,off] = sum_o dK * K * (-1 / (2 sigma_o^2))
        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                   0, Eigen::InnerStride<>>
            dd2_col(d_d2.data() + off, hw, 1, Eigen::InnerStride<>(k2));
        Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> inv_row2(inv2s.data(), cout);
        dd2_col.col(0) = -((dk * e_buf).rowwise() * inv_row2).rowwise().sum();
      } else {
        kdy = dy_all.array();
      }

      for (int y = 0; y < h; ++y) {
        CMapRM<T> a(padded.data() + (static_cast<std::int64_t>(y + dy + p) * wp + dx + p) * cin, w, cin);
        MapRM<T> da(d_padded.data() + (static_cast<std::int64_t>(y + dy + p) * wp + dx + p) * cin, w, cin);
        auto kdy_rows = kdy.matrix().middleRows(static_cast<std::int64_t>(y) * w, w);
        dw_off.noalias() += a.transpose() * kdy_rows;
        da.noalias() += kdy_rows * w_off.transpose();
      }
    }
  }

  // Crop the padded input gradient back to H x W.
  for (int y = 0; y < h; ++y) {
    const T* src = d_padded.data() + (static_cast<std::int64_t>(y + p) * wp + p) * cin;
    T* dst = g.input.data() + static_cast<std::int64_t>(y) * w * cin;
    std::copy(src, src + static_cast<std::int64_t>(w) * cin, dst);
  }

  if (gaussian) {
    g.guidance = window_sqdist_backward(guidance, k, d_d2);
  }
  return g;
}

}  // namespace stainnorm

#endif
