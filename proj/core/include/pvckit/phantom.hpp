#pragma once

#include <vector>

#include "pvckit/rng.hpp"
#include "pvckit/volume.hpp"

namespace pvckit {

struct OrganEllipsoid {
  std::array<double, 3> center;  // voxel coordinates (D,H,W order)
  std::array<double, 3> radii;   // voxels
};

// Synthetic cardiac phantom: ellipsoidal myocardial shell around an
// ellipsoidal LV blood pool (hotter than the shell, as in RBC imaging), plus
// liver and lung blobs. Organs stay inside the central ball so rotation
// augmentation does not clip them.
struct PhantomSpec {
  std::array<int64_t, 3> dims{32, 48, 48};
  std::array<double, 3> spacing_mm{4.0, 4.0, 4.0};
  OrganEllipsoid myo_outer{{15.5, 20.5, 21.5}, {7.0, 9.0, 9.0}};
  OrganEllipsoid blood_pool{{15.5, 20.5, 21.5}, {4.5, 6.0, 6.0}};
  OrganEllipsoid liver{{20.0, 29.0, 27.0}, {4.5, 5.5, 5.5}};
  OrganEllipsoid lung{{12.0, 16.0, 27.0}, {4.0, 5.0, 5.0}};
  double activity_background = 0.0;
  double activity_myocardium = 1.0;
  double activity_blood_pool = 4.0;
  double activity_liver = 1.5;
  double activity_lung = 0.3;
  PsfModel psf = PsfModel::isotropic(10.0);
  double noise_counts_per_unit = 200.0;  // Poisson scale; 0 = noiseless
  uint64_t seed = 0;

  static PhantomSpec defaults() { return {}; }
  static PhantomSpec paper_scale();  // 50x70x70 preset
  void validate() const;
};

struct PhantomCase {
  Volume truth;
  Volume observed;  // blur(truth) with optional Poisson noise
  TemplateSet templates;
  double true_imbv = 0.0;
};

// truth = piecewise-constant activities on the geometry;
// observed = Poisson(blur(truth)*scale)/scale; deterministic per seed
PhantomCase generate(const PhantomSpec& spec);

// per-case geometry/activity jitter used when generating a dataset
PhantomSpec perturb(const PhantomSpec& base, uint64_t case_seed);

// In-plane rotation about one grid axis through the volume centre, integer
// degrees. Trilinear (bilinear in-plane) for volumes; right-angle rotations
// hit the lattice exactly and degrade to pure index permutations where the
// in-plane extents allow it. Out-of-grid samples become `fill`.
Volume rotate_volume(const Volume& v, int axis, int degrees, double fill = 0.0);
// nearest-neighbour, out-of-grid voxels become background
TemplateSet rotate_templates(const TemplateSet& t, int axis, int degrees);

// the original plus rotations at step,2*step,...,360-step about each of
// `axes` grid axes (0 and 360 excluded): 1 + axes*(360/step - 1) volumes
std::vector<Volume> augment_rotations(const Volume& v, int step_degrees = 30, int axes = 3);

struct SplitIndices {
  std::vector<size_t> train, val, test;
};

// Disjoint, exhaustive, deterministic split by largest-remainder quotas.
SplitIndices dataset_split(size_t n_cases, std::array<double, 3> fractions, uint64_t seed);

}  // namespace pvckit
