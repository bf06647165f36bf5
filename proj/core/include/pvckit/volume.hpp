#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pvckit/tensor.hpp"

namespace pvckit {

enum class Organ : uint16_t {
  background = 0,
  myocardium = 1,
  blood_pool = 2,
  liver = 3,
  lung = 4,
};
inline constexpr int kOrganCount = 5;
const char* organ_name(Organ o);

// 3-d scalar activity grid, row-major (D slowest, W fastest), voxel spacing
// in millimetres. Values are non-negative activities in arbitrary units.
struct Volume {
  std::array<int64_t, 3> dims{0, 0, 0};  // D,H,W
  std::array<double, 3> spacing_mm{4.0, 4.0, 4.0};
  std::vector<double> data;

  Volume() = default;
  Volume(std::array<int64_t, 3> d, std::array<double, 3> sp)
      : dims(d), spacing_mm(sp), data(static_cast<size_t>(d[0] * d[1] * d[2]), 0.0) {}

  int64_t size() const { return dims[0] * dims[1] * dims[2]; }
  double& at(int64_t z, int64_t y, int64_t x) {
    return data[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
  }
  double at(int64_t z, int64_t y, int64_t x) const {
    return data[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
  }
  double total() const;
  double max_value() const;
  void validate() const;  // dims/spacing positive, values finite and >= 0

  Tensor to_tensor() const;  // [D,H,W]
  static Volume from_tensor(const Tensor& t, std::array<double, 3> spacing_mm);
};

// Label map partitioning a volume grid into the five organ regions. Every
// voxel carries exactly one label.
struct TemplateSet {
  std::array<int64_t, 3> dims{0, 0, 0};
  std::array<double, 3> spacing_mm{4.0, 4.0, 4.0};
  std::vector<uint16_t> labels;

  TemplateSet() = default;
  TemplateSet(std::array<int64_t, 3> d, std::array<double, 3> sp)
      : dims(d), spacing_mm(sp), labels(static_cast<size_t>(d[0] * d[1] * d[2]), 0) {}

  int64_t size() const { return dims[0] * dims[1] * dims[2]; }
  uint16_t& at(int64_t z, int64_t y, int64_t x) {
    return labels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
  }
  uint16_t at(int64_t z, int64_t y, int64_t x) const {
    return labels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
  }
  int64_t count(Organ o) const;
  void validate() const;  // labels within range
  // integer-voxel translation; vacated voxels become background
  TemplateSet shifted(std::array<int64_t, 3> shift) const;
};

// Shift-invariant separable Gaussian stand-in for the scanner system model.
struct PsfModel {
  std::array<double, 3> fwhm_mm{10.0, 10.0, 10.0};
  double trunc_sigmas = 4.0;

  static PsfModel isotropic(double fwhm_mm, double trunc = 4.0) {
    return PsfModel{{fwhm_mm, fwhm_mm, fwhm_mm}, trunc};
  }
  // normalized kernel taps for one axis given the voxel spacing; a single
  // tap of 1 in the FWHM -> 0 limit
  std::vector<double> axis_kernel(int axis, double spacing_mm) const;
};

}  // namespace pvckit
