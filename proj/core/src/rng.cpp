#include "pvckit/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "pvckit/errors.hpp"

namespace pvckit {

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw ContractError("uniform_int needs n > 0");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

int64_t Rng::poisson_knuth(double mean) {
  const double limit = std::exp(-mean);
  int64_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform();
  } while (p > limit);
  return k - 1;
}

// Hoermann's PTRS transformed-rejection sampler, valid for mean >= 10.
int64_t Rng::poisson_ptrs(double mean) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<int64_t>(k);
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        k * loglam - mean - std::lgamma(k + 1.0))
      return static_cast<int64_t>(k);
  }
}

int64_t Rng::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) throw ContractError("poisson mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  return mean < 30.0 ? poisson_knuth(mean) : poisson_ptrs(mean);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  if (have_spare_) os << " 1 " << std::hexfloat << spare_;
  else os << " 0";
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  int flag = 0;
  is >> flag;
  have_spare_ = flag == 1;
  if (have_spare_) is >> spare_;
  if (is.fail()) throw IoError("malformed RNG state string");
}

}  // namespace pvckit
