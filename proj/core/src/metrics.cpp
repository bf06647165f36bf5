#include "pvckit/metrics.hpp"

#include <cmath>
#include <limits>

#include "pvckit/losses.hpp"

namespace pvckit {

namespace {

void check_dims(const Volume& y, const Volume& x, const char* op) {
  if (y.dims != x.dims)
    throw ShapeError(std::string(op) + ": volume dims differ");
}

double mse(const Volume& y, const Volume& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < y.size(); ++i) {
    const double d = y.data[static_cast<size_t>(i)] - x.data[static_cast<size_t>(i)];
    acc += d * d;
  }
  return acc / static_cast<double>(y.size());
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

double rmse(const Volume& y, const Volume& x) {
  check_dims(y, x, "rmse");
  return std::sqrt(mse(y, x));
}

double psnr(const Volume& y, const Volume& x) {
  check_dims(y, x, "psnr");
  const double peak = y.max_value();
  if (peak <= 0.0) throw ContractError("psnr: zero-peak reference");
  const double m = mse(y, x);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak) - 10.0 * std::log10(m);
}

double ssim_eval(const Volume& y, const Volume& x, int64_t window) {
  check_dims(y, x, "ssim");
  Tape tape(false);
  const Shape s{1, 1, y.dims[0], y.dims[1], y.dims[2]};
  Var yv = tape.constant(y.to_tensor().reshaped(s));
  Var xv = tape.constant(x.to_tensor().reshaped(s));
  const SsimParams p = SsimParams::from_reference(yv.value(), window);
  return ssim_3plane(yv, xv, p).value().value();
}

std::vector<int64_t> heart_slice_indices(const TemplateSet& t) {
  std::vector<int64_t> out;
  for (int64_t z = 0; z < t.dims[0]; ++z) {
    bool has_heart = false;
    for (int64_t y = 0; y < t.dims[1] && !has_heart; ++y)
      for (int64_t x = 0; x < t.dims[2]; ++x) {
        const uint16_t l = t.at(z, y, x);
        if (l == static_cast<uint16_t>(Organ::myocardium) ||
            l == static_cast<uint16_t>(Organ::blood_pool)) {
          has_heart = true;
          break;
        }
      }
    if (has_heart) out.push_back(z);
  }
  return out;
}

Volume gather_slices(const Volume& v, const std::vector<int64_t>& slices) {
  if (slices.empty()) throw DegenerateRegionError("no slices selected");
  Volume out({static_cast<int64_t>(slices.size()), v.dims[1], v.dims[2]}, v.spacing_mm);
  const int64_t plane = v.dims[1] * v.dims[2];
  for (size_t i = 0; i < slices.size(); ++i) {
    const int64_t z = slices[i];
    if (z < 0 || z >= v.dims[0]) throw ShapeError("slice index out of range");
    std::copy(v.data.begin() + z * plane, v.data.begin() + (z + 1) * plane,
              out.data.begin() + static_cast<int64_t>(i) * plane);
  }
  return out;
}

BlandAltman bland_altman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("bland_altman: list lengths differ");
  if (a.size() < 2) throw ContractError("bland_altman needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  BlandAltman out;
  out.n = static_cast<int64_t>(a.size());
  out.bias = mean_of(d);
  out.sd = sample_sd(d, out.bias);
  out.loa_low = out.bias - 1.96 * out.sd;
  out.loa_high = out.bias + 1.96 * out.sd;
  return out;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("linear_fit: list lengths differ");
  if (x.size() < 2) throw ContractError("linear_fit needs at least 2 points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ContractError("linear_fit: zero variance in x");
  LinearFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  if (syy == 0.0) {
    out.degenerate = true;  // flat y: slope 0, pearson undefined
    out.pearson = 0.0;
    out.r_squared = 0.0;
  } else {
    out.pearson = sxy / std::sqrt(sxx * syy);
    out.r_squared = out.pearson * out.pearson;
  }
  return out;
}

AgreementReport agreement(std::span<const double> reference, std::span<const double> method) {
  AgreementReport r;
  r.ba = bland_altman(method, reference);
  r.fit = linear_fit(reference, method);
  return r;
}

CohortTable cohort_table(std::span<const CaseMetricsRow> rows) {
  if (rows.empty()) throw ContractError("cohort_table needs at least one row");
  std::map<std::string, std::map<std::string, std::vector<double>>> bucket;
  for (const CaseMetricsRow& r : rows) {
    auto& m = bucket[r.method];
    m["imbv"].push_back(r.imbv);
    m["ssim"].push_back(r.ssim);
    m["psnr"].push_back(r.psnr);
    m["rmse"].push_back(r.rmse);
    m["ssim_truth"].push_back(r.ssim_truth);
    m["psnr_truth"].push_back(r.psnr_truth);
    m["rmse_truth"].push_back(r.rmse_truth);
  }
  CohortTable out;
  for (auto& [method, metrics] : bucket)
    for (auto& [metric, vals] : metrics) {
      CohortCell cell;
      cell.n = static_cast<int64_t>(vals.size());
      cell.mean = mean_of(vals);
      cell.sd = sample_sd(vals, cell.mean);
      out[method][metric] = cell;
    }
  return out;
}

}  // namespace pvckit
