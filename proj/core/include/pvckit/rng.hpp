#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pvckit {

// mt19937_64 with hand-rolled distribution transforms. The standard engine is
// bit-portable across implementations; the standard distributions are not, so
// everything downstream of a seed goes through this class.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased via rejection
  int64_t uniform_int(int64_t n);

  // standard normal, Box-Muller with a cached spare
  double normal();

  int64_t poisson(double mean);

  template <typename T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(i + 1))]);
  }

  std::string serialize() const;
  void deserialize(const std::string& state);

private:
  int64_t poisson_knuth(double mean);
  int64_t poisson_ptrs(double mean);

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pvckit
