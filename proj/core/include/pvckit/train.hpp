#pragma once

#include <filesystem>
#include <optional>

#include "pvckit/io.hpp"
#include "pvckit/iyang.hpp"
#include "pvckit/losses.hpp"
#include "pvckit/metrics.hpp"
#include "pvckit/phantom.hpp"

namespace pvckit {

struct TrainConfig {
  NetworkConfig network;
  LossWeights weights;
  int64_t batch_size = 6;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t max_epochs = 200;
  int64_t patience = 10;  // early stop on validation loss; <=0 disables
  uint64_t seed = 1;
  bool augment = true;
  int augment_step_degrees = 30;
  std::string dataset_dir;
  std::string label_kind = "iy";  // "iy" (paper supervision) or "truth"
  int64_t checkpoint_every = 0;   // epochs; 0 = best/final only
  int threads = 0;
  std::string resume_from;  // checkpoint path; empty = fresh start

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const std::string& text);

// ---- dataset on disk -----------------------------------------------------------

struct DatasetCase {
  std::string id;
  std::filesystem::path dir;
  double true_imbv = 0;
  std::string split;  // "train" | "val" | "test"
  uint64_t seed = 0;
};

struct Dataset {
  std::filesystem::path dir;
  PhantomSpec base_spec;
  std::vector<DatasetCase> cases;

  std::vector<size_t> split(const std::string& name) const;
};

// n jittered phantom cases with a persisted train/val/test assignment
Dataset generate_dataset(const PhantomSpec& base, int n, uint64_t seed,
                         std::array<double, 3> split_fractions,
                         const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);

// writes iy.{json,raw} next to each case's observed volume
void run_iy_on_dataset(const Dataset& ds, const PsfModel& psf, const IyOptions& opts = {});

// ---- training ------------------------------------------------------------------

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_csv;
  int64_t epochs_run = 0;
  int64_t steps_run = 0;
  double first_epoch_loss = 0;
  double last_epoch_loss = 0;
  double best_val_loss = 0;
};

// Minimizes the composite loss over the model parameters with Adam.
// Deterministic for a fixed seed (the kernels are order-fixed, so this holds
// for any thread count).
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir);

// ---- evaluation ------------------------------------------------------------------

struct EvalOptions {
  std::string split = "test";
  bool heart_slices_only = true;  // exclude transverse slices without heart labels
  int threads = 0;
};

struct EvalResult {
  std::vector<CaseMetricsRow> rows;
  AgreementReport network_vs_iy;
  AgreementReport nonpvc_vs_iy;
  std::filesystem::path metrics_csv;
  std::filesystem::path summary_json;
};

// Runs the checkpointed network on every case of the split and scores the
// non-PVC input, the network output and the iY label against both the iY
// reference and the phantom ground truth.
EvalResult evaluate(const Checkpoint& ckpt, const std::filesystem::path& dataset_dir,
                    const EvalOptions& opts, const std::filesystem::path& out_dir);

// cohort table + agreement statistics from a per-case metrics CSV
std::string metrics_csv_text(const std::vector<CaseMetricsRow>& rows);
std::vector<CaseMetricsRow> read_metrics_csv(const std::filesystem::path& path);
void write_report(const std::vector<CaseMetricsRow>& rows, const std::filesystem::path& out_dir);

}  // namespace pvckit
