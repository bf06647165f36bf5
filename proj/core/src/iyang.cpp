#include "pvckit/iyang.hpp"

#include <algorithm>
#include <cmath>

#include "pvckit/losses.hpp"

namespace pvckit {

namespace {

int64_t reflect(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

void blur_axis(std::vector<double>& data, const std::array<int64_t, 3>& dims, int axis,
               const std::vector<double>& kernel) {
  if (kernel.size() == 1 && kernel[0] == 1.0) return;
  const int64_t radius = static_cast<int64_t>(kernel.size() / 2);
  const int64_t n = dims[static_cast<size_t>(axis)];
  // iterate all lines along `axis`
  int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= dims[static_cast<size_t>(a)];
  for (int a = axis + 1; a < 3; ++a) inner *= dims[static_cast<size_t>(a)];
  std::vector<double> line(static_cast<size_t>(n));
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      for (int64_t i = 0; i < n; ++i) line[static_cast<size_t>(i)] = data[static_cast<size_t>(base + i * inner)];
      for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t j = -radius; j <= radius; ++j)
          acc += kernel[static_cast<size_t>(j + radius)] * line[static_cast<size_t>(reflect(i + j, n))];
        data[static_cast<size_t>(base + i * inner)] = acc;
      }
    }
}

}  // namespace

Volume blur(const Volume& v, const PsfModel& psf) {
  Volume out = v;
  for (int axis = 0; axis < 3; ++axis)
    blur_axis(out.data, out.dims, axis, psf.axis_kernel(axis, v.spacing_mm[static_cast<size_t>(axis)]));
  return out;
}

RegionMeans region_means(const Volume& v, const TemplateSet& t) {
  if (v.dims != t.dims) throw ShapeError("volume and template dims differ");
  RegionMeans rm;
  std::array<double, kOrganCount> sums{};
  for (int64_t i = 0; i < v.size(); ++i) {
    const uint16_t l = t.labels[static_cast<size_t>(i)];
    sums[l] += v.data[static_cast<size_t>(i)];
    ++rm.count[l];
  }
  for (int o = 0; o < kOrganCount; ++o) {
    if (rm.count[static_cast<size_t>(o)] == 0)
      throw DegenerateRegionError(std::string("empty ") + organ_name(static_cast<Organ>(o)) + " region");
    rm.mean[static_cast<size_t>(o)] =
        sums[static_cast<size_t>(o)] / static_cast<double>(rm.count[static_cast<size_t>(o)]);
  }
  return rm;
}

Volume iy_correct(const Volume& observed, const TemplateSet& t, const PsfModel& psf,
                  const IyOptions& opts) {
  if (observed.dims != t.dims) throw ShapeError("volume and template dims differ");
  if (!(opts.epsilon > 0.0)) throw ContractError("iy epsilon must be > 0");
  if (opts.iterations < 0) throw ContractError("iy iterations must be >= 0");

  Volume f = observed;
  Volume templ(observed.dims, observed.spacing_mm);
  for (int k = 0; k < opts.iterations; ++k) {
    const RegionMeans rm = region_means(f, t);
    double t_max = 0.0;
    for (int64_t i = 0; i < templ.size(); ++i) {
      templ.data[static_cast<size_t>(i)] = rm.mean[t.labels[static_cast<size_t>(i)]];
      t_max = std::max(t_max, templ.data[static_cast<size_t>(i)]);
    }
    const double eps = opts.epsilon * (t_max > 0.0 ? t_max : 1.0);
    Volume blurred = blur(templ, psf);
    for (int64_t i = 0; i < f.size(); ++i) {
      const double c = templ.data[static_cast<size_t>(i)] / (blurred.data[static_cast<size_t>(i)] + eps);
      f.data[static_cast<size_t>(i)] =
          observed.data[static_cast<size_t>(i)] * std::clamp(c, 0.0, opts.clamp_max);
    }
  }
  return f;
}

IyMismatchResult iy_mismatch_demo(const Volume& observed, const TemplateSet& templates,
                                  std::array<int64_t, 3> shift_voxels, const PsfModel& psf,
                                  const IyOptions& opts) {
  const TemplateSet shifted = templates.shifted(shift_voxels);
  const Volume aligned = iy_correct(observed, templates, psf, opts);
  Volume corrected = iy_correct(observed, shifted, psf, opts);

  IyMismatchResult r;
  r.report.shift = shift_voxels;
  r.report.imbv_observed = imbv(observed, templates);
  r.report.imbv_aligned = imbv(aligned, templates);
  // both corrections are judged in the aligned anatomical frame
  r.report.imbv_shifted = imbv(corrected, templates);
  r.report.imbv_difference = r.report.imbv_shifted - r.report.imbv_aligned;
  r.corrected_shifted = std::move(corrected);
  return r;
}

}  // namespace pvckit
