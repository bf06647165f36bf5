#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pvckit/volume.hpp"

namespace pvckit {

double rmse(const Volume& y, const Volume& x);

// 20*log10(peak(y)) - 10*log10(MSE); +infinity when x == y exactly.
// Peak is the maximum of the reference volume y.
double psnr(const Volume& y, const Volume& x);

// 3-plane uniform-window SSIM of the losses module, gradient-free, with the
// dynamic range taken from the reference y.
double ssim_eval(const Volume& y, const Volume& x, int64_t window = 11);

// transverse slices that intersect the myocardium or blood pool
std::vector<int64_t> heart_slice_indices(const TemplateSet& t);
Volume gather_slices(const Volume& v, const std::vector<int64_t>& slices);

struct BlandAltman {
  double bias = 0;
  double sd = 0;  // sample SD (n-1) of the differences
  double loa_low = 0, loa_high = 0;
  int64_t n = 0;
};
// differences a - b; limits of agreement bias +- 1.96 sd
BlandAltman bland_altman(std::span<const double> a, std::span<const double> b);

struct LinearFit {
  double slope = 0, intercept = 0;
  double r_squared = 0, pearson = 0;
  bool degenerate = false;  // var(y) == 0: pearson undefined
};
// ordinary least squares of y on x; throws on var(x) == 0
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Bland-Altman plus linear fit of method (y) against reference (x).
struct AgreementReport {
  BlandAltman ba;     // method - reference
  LinearFit fit;      // method ~ reference
};
AgreementReport agreement(std::span<const double> reference, std::span<const double> method);

// one row per case per method; ssim/psnr/rmse are vs the iY reference, the
// *_truth columns vs the phantom ground truth
struct CaseMetricsRow {
  std::string case_id;
  std::string method;
  double imbv = 0;
  double ssim = 0, psnr = 0, rmse = 0;
  double ssim_truth = 0, psnr_truth = 0, rmse_truth = 0;
};

struct CohortCell {
  double mean = 0, sd = 0;
  int64_t n = 0;
};
// method -> metric -> mean/SD (sample SD, n-1; zero for a single case)
using CohortTable = std::map<std::string, std::map<std::string, CohortCell>>;
CohortTable cohort_table(std::span<const CaseMetricsRow> rows);

}  // namespace pvckit
