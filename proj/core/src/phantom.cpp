#include "pvckit/phantom.hpp"

#include <cmath>
#include <numbers>

#include "pvckit/iyang.hpp"
#include "pvckit/losses.hpp"

namespace pvckit {

PhantomSpec PhantomSpec::paper_scale() {
  PhantomSpec s;
  const PhantomSpec base;
  s.dims = {50, 70, 70};
  const std::array<double, 3> f{50.0 / 32.0, 70.0 / 48.0, 70.0 / 48.0};
  auto scale = [&f](const OrganEllipsoid& e) {
    OrganEllipsoid out = e;
    for (int a = 0; a < 3; ++a) {
      out.center[static_cast<size_t>(a)] = e.center[static_cast<size_t>(a)] * f[static_cast<size_t>(a)];
      out.radii[static_cast<size_t>(a)] = e.radii[static_cast<size_t>(a)] * f[static_cast<size_t>(a)];
    }
    return out;
  };
  s.myo_outer = scale(base.myo_outer);
  s.blood_pool = scale(base.blood_pool);
  s.liver = scale(base.liver);
  s.lung = scale(base.lung);
  return s;
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[static_cast<size_t>(a)] < 1) throw ConfigError("phantom dims must be positive");
    if (!(spacing_mm[static_cast<size_t>(a)] > 0.0)) throw ConfigError("phantom spacing must be positive");
    if (!(myo_outer.radii[static_cast<size_t>(a)] > 0.0) || !(blood_pool.radii[static_cast<size_t>(a)] > 0.0) ||
        !(liver.radii[static_cast<size_t>(a)] > 0.0) || !(lung.radii[static_cast<size_t>(a)] > 0.0))
      throw ConfigError("organ radii must be positive");
    if (blood_pool.radii[static_cast<size_t>(a)] >= myo_outer.radii[static_cast<size_t>(a)])
      throw ConfigError("blood pool must fit inside the myocardial shell");
  }
  if (activity_background < 0 || activity_myocardium < 0 || activity_blood_pool < 0 ||
      activity_liver < 0 || activity_lung < 0)
    throw ConfigError("activities must be >= 0");
  if (noise_counts_per_unit < 0) throw ConfigError("noise scale must be >= 0");
}

namespace {

bool inside(const OrganEllipsoid& e, int64_t z, int64_t y, int64_t x) {
  const double dz = (static_cast<double>(z) - e.center[0]) / e.radii[0];
  const double dy = (static_cast<double>(y) - e.center[1]) / e.radii[1];
  const double dx = (static_cast<double>(x) - e.center[2]) / e.radii[2];
  return dz * dz + dy * dy + dx * dx <= 1.0;
}

}  // namespace

PhantomCase generate(const PhantomSpec& spec) {
  spec.validate();
  PhantomCase c;
  c.templates = TemplateSet(spec.dims, spec.spacing_mm);
  c.truth = Volume(spec.dims, spec.spacing_mm);

  for (int64_t z = 0; z < spec.dims[0]; ++z)
    for (int64_t y = 0; y < spec.dims[1]; ++y)
      for (int64_t x = 0; x < spec.dims[2]; ++x) {
        Organ o = Organ::background;
        if (inside(spec.liver, z, y, x)) o = Organ::liver;
        if (inside(spec.lung, z, y, x)) o = Organ::lung;
        if (inside(spec.myo_outer, z, y, x)) o = Organ::myocardium;  // heart wins overlaps
        if (inside(spec.blood_pool, z, y, x)) o = Organ::blood_pool;
        c.templates.at(z, y, x) = static_cast<uint16_t>(o);
      }

  const double act[kOrganCount] = {spec.activity_background, spec.activity_myocardium,
                                   spec.activity_blood_pool, spec.activity_liver,
                                   spec.activity_lung};
  for (int o = 0; o < kOrganCount; ++o)
    if (c.templates.count(static_cast<Organ>(o)) == 0)
      throw DegenerateRegionError(std::string("degenerate geometry: empty ") +
                                  organ_name(static_cast<Organ>(o)) + " region");
  for (int64_t i = 0; i < c.truth.size(); ++i)
    c.truth.data[static_cast<size_t>(i)] = act[c.templates.labels[static_cast<size_t>(i)]];

  c.true_imbv = imbv(c.truth, c.templates);

  c.observed = blur(c.truth, spec.psf);
  if (spec.noise_counts_per_unit > 0.0) {
    Rng rng(spec.seed);
    const double scale = spec.noise_counts_per_unit;
    for (double& v : c.observed.data)
      v = static_cast<double>(rng.poisson(v * scale)) / scale;
  }
  return c;
}

PhantomSpec perturb(const PhantomSpec& base, uint64_t case_seed) {
  PhantomSpec s = base;
  s.seed = case_seed;
  Rng r(case_seed);
  std::array<double, 3> dc{r.uniform(-1.5, 1.5), r.uniform(-1.5, 1.5), r.uniform(-1.5, 1.5)};
  const double heart_scale = 1.0 + r.uniform(-0.10, 0.10);
  const double blp_extra = 1.0 + r.uniform(-0.08, 0.08);
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<size_t>(a);
    s.myo_outer.center[ua] = base.myo_outer.center[ua] + dc[ua];
    s.blood_pool.center[ua] = base.blood_pool.center[ua] + dc[ua];  // keep concentric
    s.myo_outer.radii[ua] = base.myo_outer.radii[ua] * heart_scale;
    s.blood_pool.radii[ua] = base.blood_pool.radii[ua] * heart_scale * blp_extra;
  }
  s.activity_myocardium = base.activity_myocardium * (1.0 + r.uniform(-0.15, 0.15));
  s.activity_blood_pool = base.activity_blood_pool * (1.0 + r.uniform(-0.15, 0.15));
  return s;
}

namespace {

struct PlaneAxes {
  int a, b;  // the two in-plane axes, in (D,H,W) order
};

PlaneAxes plane_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    case 2: return {0, 1};
    default: throw ContractError("rotation axis must be 0, 1, or 2");
  }
}

void rotation_trig(int degrees, double& c, double& s) {
  int d = degrees % 360;
  if (d < 0) d += 360;
  switch (d) {  // exact right angles; oblique angles go through libm
    case 0: c = 1.0; s = 0.0; return;
    case 90: c = 0.0; s = 1.0; return;
    case 180: c = -1.0; s = 0.0; return;
    case 270: c = 0.0; s = -1.0; return;
    default: {
      const double rad = static_cast<double>(d) * std::numbers::pi / 180.0;
      c = std::cos(rad);
      s = std::sin(rad);
    }
  }
}

constexpr double kLatticeSnap = 1e-9;

double snap(double v) {
  const double r = std::round(v);
  return std::fabs(v - r) < kLatticeSnap ? r : v;
}

// inverse-map the output in-plane coordinates to the source plane
inline void source_coords(double ia, double ib, double ca, double cb, double c, double s,
                          double& sa, double& sb) {
  const double da = ia - ca, db = ib - cb;
  sa = snap(c * da + s * db + ca);
  sb = snap(-s * da + c * db + cb);
}

}  // namespace

Volume rotate_volume(const Volume& v, int axis, int degrees, double fill) {
  const PlaneAxes pl = plane_axes(axis);
  double c, s;
  rotation_trig(degrees, c, s);
  const int64_t na = v.dims[static_cast<size_t>(pl.a)];
  const int64_t nb = v.dims[static_cast<size_t>(pl.b)];
  const double ca = static_cast<double>(na - 1) / 2.0;
  const double cb = static_cast<double>(nb - 1) / 2.0;

  Volume out(v.dims, v.spacing_mm);
  std::array<int64_t, 3> idx;
  for (idx[0] = 0; idx[0] < v.dims[0]; ++idx[0])
    for (idx[1] = 0; idx[1] < v.dims[1]; ++idx[1])
      for (idx[2] = 0; idx[2] < v.dims[2]; ++idx[2]) {
        double sa, sb;
        source_coords(static_cast<double>(idx[static_cast<size_t>(pl.a)]),
                      static_cast<double>(idx[static_cast<size_t>(pl.b)]), ca, cb, c, s, sa, sb);
        const int64_t a0 = static_cast<int64_t>(std::floor(sa));
        const int64_t b0 = static_cast<int64_t>(std::floor(sb));
        const double fa = sa - static_cast<double>(a0);
        const double fb = sb - static_cast<double>(b0);
        double acc = 0.0;
        bool any = false;
        std::array<int64_t, 3> src = idx;
        for (int da = 0; da < 2; ++da)
          for (int db = 0; db < 2; ++db) {
            const double wgt = (da ? fa : 1.0 - fa) * (db ? fb : 1.0 - fb);
            if (wgt == 0.0) continue;
            const int64_t aa = a0 + da, bb = b0 + db;
            if (aa < 0 || aa >= na || bb < 0 || bb >= nb) {
              acc += wgt * fill;
              continue;
            }
            any = true;
            src[static_cast<size_t>(pl.a)] = aa;
            src[static_cast<size_t>(pl.b)] = bb;
            acc += wgt * v.at(src[0], src[1], src[2]);
          }
        out.at(idx[0], idx[1], idx[2]) = any ? acc : fill;
      }
  return out;
}

TemplateSet rotate_templates(const TemplateSet& t, int axis, int degrees) {
  const PlaneAxes pl = plane_axes(axis);
  double c, s;
  rotation_trig(degrees, c, s);
  const int64_t na = t.dims[static_cast<size_t>(pl.a)];
  const int64_t nb = t.dims[static_cast<size_t>(pl.b)];
  const double ca = static_cast<double>(na - 1) / 2.0;
  const double cb = static_cast<double>(nb - 1) / 2.0;

  TemplateSet out(t.dims, t.spacing_mm);
  std::array<int64_t, 3> idx;
  for (idx[0] = 0; idx[0] < t.dims[0]; ++idx[0])
    for (idx[1] = 0; idx[1] < t.dims[1]; ++idx[1])
      for (idx[2] = 0; idx[2] < t.dims[2]; ++idx[2]) {
        double sa, sb;
        source_coords(static_cast<double>(idx[static_cast<size_t>(pl.a)]),
                      static_cast<double>(idx[static_cast<size_t>(pl.b)]), ca, cb, c, s, sa, sb);
        const int64_t aa = static_cast<int64_t>(std::llround(sa));
        const int64_t bb = static_cast<int64_t>(std::llround(sb));
        uint16_t label = static_cast<uint16_t>(Organ::background);
        if (aa >= 0 && aa < na && bb >= 0 && bb < nb) {
          std::array<int64_t, 3> src = idx;
          src[static_cast<size_t>(pl.a)] = aa;
          src[static_cast<size_t>(pl.b)] = bb;
          label = t.at(src[0], src[1], src[2]);
        }
        out.at(idx[0], idx[1], idx[2]) = label;
      }
  return out;
}

std::vector<Volume> augment_rotations(const Volume& v, int step_degrees, int axes) {
  if (step_degrees < 1 || 360 % step_degrees != 0)
    throw ContractError("rotation step must divide 360");
  if (axes < 1 || axes > 3) throw ContractError("axes must be 1..3");
  std::vector<Volume> out;
  out.reserve(1 + static_cast<size_t>(axes) * static_cast<size_t>(360 / step_degrees - 1));
  out.push_back(v);
  for (int axis = 0; axis < axes; ++axis)
    for (int deg = step_degrees; deg < 360; deg += step_degrees)
      out.push_back(rotate_volume(v, axis, deg));
  return out;
}

SplitIndices dataset_split(size_t n_cases, std::array<double, 3> fractions, uint64_t seed) {
  if (n_cases == 0) throw ContractError("cannot split an empty case list");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ContractError("split fractions must be >= 0");
    total += f;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");

  // largest-remainder quotas
  std::array<size_t, 3> sizes{};
  std::array<double, 3> rem{};
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = fractions[static_cast<size_t>(i)] * static_cast<double>(n_cases);
    sizes[static_cast<size_t>(i)] = static_cast<size_t>(std::floor(q));
    rem[static_cast<size_t>(i)] = q - std::floor(q);
    assigned += sizes[static_cast<size_t>(i)];
  }
  while (assigned < n_cases) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[static_cast<size_t>(i)] > rem[static_cast<size_t>(best)]) best = i;
    ++sizes[static_cast<size_t>(best)];
    rem[static_cast<size_t>(best)] = -1.0;
    ++assigned;
  }

  std::vector<size_t> order(n_cases);
  for (size_t i = 0; i < n_cases; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  SplitIndices out;
  size_t pos = 0;
  for (size_t i = 0; i < sizes[0]; ++i) out.train.push_back(order[pos++]);
  for (size_t i = 0; i < sizes[1]; ++i) out.val.push_back(order[pos++]);
  for (size_t i = 0; i < sizes[2]; ++i) out.test.push_back(order[pos++]);
  return out;
}

}  // namespace pvckit
