#include "pvckit/volume.hpp"

#include <cmath>

namespace pvckit {

const char* organ_name(Organ o) {
  switch (o) {
    case Organ::background: return "background";
    case Organ::myocardium: return "myocardium";
    case Organ::blood_pool: return "blood_pool";
    case Organ::liver: return "liver";
    case Organ::lung: return "lung";
  }
  return "unknown";
}

double Volume::total() const {
  double acc = 0.0;
  for (double v : data) acc += v;
  return acc;
}

double Volume::max_value() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, v);
  return m;
}

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[static_cast<size_t>(a)] < 1)
      throw ShapeError("volume extent must be positive on axis " + std::string(1, "DHW"[a]));
    if (!(spacing_mm[static_cast<size_t>(a)] > 0.0))
      throw ShapeError("voxel spacing must be positive on axis " + std::string(1, "DHW"[a]));
  }
  if (static_cast<int64_t>(data.size()) != size())
    throw ShapeError("volume data length does not match dims");
  for (double v : data) {
    if (!std::isfinite(v)) throw NonFiniteError("volume contains a non-finite value");
    if (v < 0.0) throw ContractError("volume contains a negative activity");
  }
}

Tensor Volume::to_tensor() const { return Tensor(Shape{dims[0], dims[1], dims[2]}, data); }

Volume Volume::from_tensor(const Tensor& t, std::array<double, 3> spacing_mm) {
  if (t.ndim() != 3) throw ShapeError("volume tensor must be 3-d, got " + shape_str(t.shape()));
  Volume v({t.dim(0), t.dim(1), t.dim(2)}, spacing_mm);
  const double* p = t.data();
  std::copy(p, p + t.size(), v.data.begin());
  return v;
}

int64_t TemplateSet::count(Organ o) const {
  int64_t n = 0;
  for (uint16_t l : labels)
    if (l == static_cast<uint16_t>(o)) ++n;
  return n;
}

void TemplateSet::validate() const {
  for (int a = 0; a < 3; ++a)
    if (dims[static_cast<size_t>(a)] < 1)
      throw ShapeError("label map extent must be positive on axis " + std::string(1, "DHW"[a]));
  if (static_cast<int64_t>(labels.size()) != size())
    throw ShapeError("label data length does not match dims");
  for (uint16_t l : labels)
    if (l >= kOrganCount) throw ContractError("label value " + std::to_string(l) + " out of range");
}

TemplateSet TemplateSet::shifted(std::array<int64_t, 3> shift) const {
  TemplateSet out(dims, spacing_mm);
  for (int64_t z = 0; z < dims[0]; ++z)
    for (int64_t y = 0; y < dims[1]; ++y)
      for (int64_t x = 0; x < dims[2]; ++x) {
        const int64_t sz = z - shift[0], sy = y - shift[1], sx = x - shift[2];
        if (sz >= 0 && sz < dims[0] && sy >= 0 && sy < dims[1] && sx >= 0 && sx < dims[2])
          out.at(z, y, x) = at(sz, sy, sx);
      }
  return out;
}

std::vector<double> PsfModel::axis_kernel(int axis, double spacing_mm) const {
  if (!(spacing_mm > 0.0)) throw ShapeError("voxel spacing must be positive");
  const double fwhm = fwhm_mm[static_cast<size_t>(axis)];
  if (fwhm < 0.0 || !(trunc_sigmas > 0.0))
    throw ContractError("psf FWHM must be >= 0 and truncation > 0");
  constexpr double fwhm_to_sigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))
  const double sigma = fwhm * fwhm_to_sigma / spacing_mm;  // in voxels
  const int64_t radius = sigma < 1e-12 ? 0 : static_cast<int64_t>(std::ceil(trunc_sigmas * sigma));
  if (radius == 0) return {1.0};
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double total = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    const double t = static_cast<double>(i) / sigma;
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * t * t);
    total += k[static_cast<size_t>(i + radius)];
  }
  for (double& v : k) v /= total;  // count-preserving
  return k;
}

}  // namespace pvckit
