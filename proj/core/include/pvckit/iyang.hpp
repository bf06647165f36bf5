#pragma once

#include <array>

#include "pvckit/volume.hpp"

namespace pvckit {

// Separable Gaussian blur with symmetric (edge-inclusive) reflection at the
// borders. The kernel is count-preserving (taps sum to 1); FWHM -> 0 is the
// identity.
Volume blur(const Volume& v, const PsfModel& psf);

struct RegionMeans {
  std::array<double, kOrganCount> mean{};
  std::array<int64_t, kOrganCount> count{};
};

// Arithmetic mean per organ label. Throws DegenerateRegionError when a label
// has no voxels.
RegionMeans region_means(const Volume& v, const TemplateSet& t);

struct IyOptions {
  int iterations = 10;
  double epsilon = 1e-8;    // relative divisor guard, scaled by max(T)
  double clamp_max = 10.0;  // correction-factor ceiling
};

// Anatomical-guided iterative Yang correction: each iteration rebuilds a
// piecewise-constant organ template T from the current estimate's region
// means and multiplies the *observed* image by T / (blur(T) + eps).
Volume iy_correct(const Volume& observed, const TemplateSet& t, const PsfModel& psf,
                  const IyOptions& opts = {});

struct IyMismatchReport {
  double imbv_observed = 0;
  double imbv_aligned = 0;  // iY with the given templates, measured on them
  double imbv_shifted = 0;  // iY with shifted templates, measured on the aligned ones
  double imbv_difference = 0;  // shifted - aligned
  std::array<int64_t, 3> shift{0, 0, 0};
};

struct IyMismatchResult {
  Volume corrected_shifted;
  IyMismatchReport report;
};

// Reproduces the paper's mis-registration failure mode: runs iY once with the
// aligned templates and once with templates shifted by whole voxels, and
// reports the IMBV discrepancy.
IyMismatchResult iy_mismatch_demo(const Volume& observed, const TemplateSet& templates,
                                  std::array<int64_t, 3> shift_voxels, const PsfModel& psf,
                                  const IyOptions& opts = {});

}  // namespace pvckit
