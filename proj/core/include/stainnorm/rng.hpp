#ifndef STAINNORM_RNG_HPP
#define STAINNORM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stainnorm/errors.hpp"
#include "stainnorm/tensor.hpp"

namespace stainnorm {

// Deterministic random source. Distributions are derived from the raw
// mt19937_64 stream by explicit arithmetic (not std::*_distribution,
// whose output sequences are implementation-defined), so identical
// seeds give identical streams on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Standard normal via Box-Muller (single value; no cached spare so the
  // stream position is a simple function of the number of draws).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, stddev));
  }

  // Xavier (Glorot) uniform initialization for a kH x kW x Cin x Cout
  // convolution weight: limit = sqrt(6 / (fan_in + fan_out)).
  template <typename T>
  void xavier_fill(Tensor<T>& w) {
    std::int64_t fan_in = 1, fan_out = 1;
    if (w.rank() == 4) {
      const std::int64_t rf = static_cast<std::int64_t>(w.dim(0)) * w.dim(1);
      fan_in = rf * w.dim(2);
      fan_out = rf * w.dim(3);
    } else if (w.rank() == 2) {
      fan_in = w.dim(0);
      fan_out = w.dim(1);
    } else {
      fan_in = fan_out = w.numel();
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    fill_uniform(w, -limit, limit);
  }

  // Engine state round-trips through a text string (checkpoint manifest).
  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw InvalidInput("malformed RNG state string");
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stainnorm

#endif
