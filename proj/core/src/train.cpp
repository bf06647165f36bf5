#include "pvckit/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pvckit/optim.hpp"

namespace pvckit {

namespace {
using nlohmann::json;
namespace fs = std::filesystem;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("beta1/beta2 must be in (0,1)");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (label_kind != "iy" && label_kind != "truth")
    throw ConfigError("label_kind must be 'iy' or 'truth'");
  if (dataset_dir.empty()) throw ConfigError("dataset_dir is required");
  weights.validate();
  validate_config(network);
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j{{"network", json::parse(network_config_to_json(cfg.network))},
         {"loss_weights", {{"lambda_a", cfg.weights.lambda_a},
                           {"lambda_b", cfg.weights.lambda_b},
                           {"lambda_c", cfg.weights.lambda_c}}},
         {"batch_size", cfg.batch_size},
         {"learning_rate", cfg.learning_rate},
         {"beta1", cfg.beta1},
         {"beta2", cfg.beta2},
         {"adam_eps", cfg.adam_eps},
         {"max_epochs", cfg.max_epochs},
         {"patience", cfg.patience},
         {"seed", cfg.seed},
         {"augment", cfg.augment},
         {"augment_step_degrees", cfg.augment_step_degrees},
         {"dataset_dir", cfg.dataset_dir},
         {"label_kind", cfg.label_kind},
         {"checkpoint_every", cfg.checkpoint_every},
         {"threads", cfg.threads},
         {"resume_from", cfg.resume_from}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed train config: ") + e.what());
  }
  TrainConfig cfg;
  if (j.contains("network")) cfg.network = network_config_from_json(j.at("network").dump());
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    cfg.weights.lambda_a = w.value("lambda_a", cfg.weights.lambda_a);
    cfg.weights.lambda_b = w.value("lambda_b", cfg.weights.lambda_b);
    cfg.weights.lambda_c = w.value("lambda_c", cfg.weights.lambda_c);
  }
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.augment = j.value("augment", cfg.augment);
  cfg.augment_step_degrees = j.value("augment_step_degrees", cfg.augment_step_degrees);
  cfg.dataset_dir = j.value("dataset_dir", cfg.dataset_dir);
  cfg.label_kind = j.value("label_kind", cfg.label_kind);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.resume_from = j.value("resume_from", cfg.resume_from);
  return cfg;
}

namespace {

json ellipsoid_json(const OrganEllipsoid& e) {
  return json{{"center", e.center}, {"radii", e.radii}};
}
OrganEllipsoid ellipsoid_from(const json& j, const OrganEllipsoid& dflt) {
  OrganEllipsoid e = dflt;
  e.center = j.value("center", e.center);
  e.radii = j.value("radii", e.radii);
  return e;
}

}  // namespace

std::string phantom_spec_to_json(const PhantomSpec& s) {
  json j{{"dims", s.dims},
         {"spacing_mm", s.spacing_mm},
         {"myo_outer", ellipsoid_json(s.myo_outer)},
         {"blood_pool", ellipsoid_json(s.blood_pool)},
         {"liver", ellipsoid_json(s.liver)},
         {"lung", ellipsoid_json(s.lung)},
         {"activity_background", s.activity_background},
         {"activity_myocardium", s.activity_myocardium},
         {"activity_blood_pool", s.activity_blood_pool},
         {"activity_liver", s.activity_liver},
         {"activity_lung", s.activity_lung},
         {"psf_fwhm_mm", s.psf.fwhm_mm},
         {"psf_trunc_sigmas", s.psf.trunc_sigmas},
         {"noise_counts_per_unit", s.noise_counts_per_unit},
         {"seed", s.seed}};
  return j.dump(2);
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed phantom spec: ") + e.what());
  }
  PhantomSpec s;
  s.dims = j.value("dims", s.dims);
  s.spacing_mm = j.value("spacing_mm", s.spacing_mm);
  if (j.contains("myo_outer")) s.myo_outer = ellipsoid_from(j.at("myo_outer"), s.myo_outer);
  if (j.contains("blood_pool")) s.blood_pool = ellipsoid_from(j.at("blood_pool"), s.blood_pool);
  if (j.contains("liver")) s.liver = ellipsoid_from(j.at("liver"), s.liver);
  if (j.contains("lung")) s.lung = ellipsoid_from(j.at("lung"), s.lung);
  s.activity_background = j.value("activity_background", s.activity_background);
  s.activity_myocardium = j.value("activity_myocardium", s.activity_myocardium);
  s.activity_blood_pool = j.value("activity_blood_pool", s.activity_blood_pool);
  s.activity_liver = j.value("activity_liver", s.activity_liver);
  s.activity_lung = j.value("activity_lung", s.activity_lung);
  s.psf.fwhm_mm = j.value("psf_fwhm_mm", s.psf.fwhm_mm);
  s.psf.trunc_sigmas = j.value("psf_trunc_sigmas", s.psf.trunc_sigmas);
  s.noise_counts_per_unit = j.value("noise_counts_per_unit", s.noise_counts_per_unit);
  s.seed = j.value("seed", s.seed);
  return s;
}

// ---- dataset -----------------------------------------------------------------

std::vector<size_t> Dataset::split(const std::string& name) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < cases.size(); ++i)
    if (cases[i].split == name) out.push_back(i);
  return out;
}

Dataset generate_dataset(const PhantomSpec& base, int n, uint64_t seed,
                         std::array<double, 3> split_fractions, const fs::path& out_dir) {
  if (n < 1) throw ContractError("dataset needs at least one case");
  fs::create_directories(out_dir);
  const SplitIndices split = dataset_split(static_cast<size_t>(n), split_fractions, seed);
  std::vector<std::string> split_of(static_cast<size_t>(n));
  for (size_t i : split.train) split_of[i] = "train";
  for (size_t i : split.val) split_of[i] = "val";
  for (size_t i : split.test) split_of[i] = "test";

  Dataset ds;
  ds.dir = out_dir;
  ds.base_spec = base;
  json case_list = json::array();
  for (int i = 0; i < n; ++i) {
    const uint64_t case_seed = seed * 1000003ull + static_cast<uint64_t>(i);
    PhantomSpec spec = perturb(base, case_seed);
    PhantomCase pc = generate(spec);
    char id[32];
    std::snprintf(id, sizeof(id), "case_%03d", i);
    const fs::path cdir = out_dir / id;
    fs::create_directories(cdir);
    write_volume(cdir / "truth", pc.truth);
    write_volume(cdir / "observed", pc.observed);
    write_labels(cdir / "labels", pc.templates);
    json cm{{"id", id},
            {"seed", case_seed},
            {"true_imbv", pc.true_imbv},
            {"spec", json::parse(phantom_spec_to_json(spec))}};
    write_text_file(cdir / "manifest.json", cm.dump(2) + "\n");
    case_list.push_back(json{{"id", id},
                             {"split", split_of[static_cast<size_t>(i)]},
                             {"true_imbv", pc.true_imbv},
                             {"seed", case_seed}});
    ds.cases.push_back({id, cdir, pc.true_imbv, split_of[static_cast<size_t>(i)], case_seed});
  }
  json manifest{{"format", "pvckit-dataset"},
                {"seed", seed},
                {"n", n},
                {"split_fractions", split_fractions},
                {"base_spec", json::parse(phantom_spec_to_json(base))},
                {"cases", case_list}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return ds;
}

Dataset load_dataset(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("malformed dataset manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "pvckit-dataset")
    throw IoError((dir / "manifest.json").string() + " is not a pvckit dataset manifest");
  Dataset ds;
  ds.dir = dir;
  ds.base_spec = phantom_spec_from_json(manifest.at("base_spec").dump());
  for (const json& c : manifest.at("cases")) {
    DatasetCase dc;
    dc.id = c.at("id").get<std::string>();
    dc.dir = dir / dc.id;
    dc.true_imbv = c.value("true_imbv", 0.0);
    dc.split = c.value("split", "train");
    dc.seed = c.value("seed", uint64_t{0});
    if (!fs::exists(dc.dir)) throw IoError("dataset case directory missing: " + dc.dir.string());
    ds.cases.push_back(std::move(dc));
  }
  return ds;
}

void run_iy_on_dataset(const Dataset& ds, const PsfModel& psf, const IyOptions& opts) {
  for (const DatasetCase& c : ds.cases) {
    const Volume observed = read_volume(c.dir / "observed");
    const TemplateSet labels = read_labels(c.dir / "labels");
    write_volume(c.dir / "iy", iy_correct(observed, labels, psf, opts));
  }
}

// ---- training -------------------------------------------------------------------

namespace {

struct LoadedCase {
  Volume observed, label;
  TemplateSet templates;
};

struct SampleRef {
  size_t case_idx;
  int axis;     // -1 = original
  int degrees;  // unused for originals
};

struct BatchData {
  Tensor x, y;
  std::vector<TemplateSet> templates;
};

BatchData materialize_batch(const std::vector<LoadedCase>& cases,
                            const std::vector<SampleRef>& samples,
                            std::span<const size_t> index) {
  const std::array<int64_t, 3>& dims = cases[samples[index[0]].case_idx].observed.dims;
  const int64_t b = static_cast<int64_t>(index.size());
  BatchData out;
  out.x = Tensor(Shape{b, 1, dims[0], dims[1], dims[2]});
  out.y = Tensor(Shape{b, 1, dims[0], dims[1], dims[2]});
  const int64_t plane = dims[0] * dims[1] * dims[2];
  for (int64_t i = 0; i < b; ++i) {
    const SampleRef& s = samples[index[static_cast<size_t>(i)]];
    const LoadedCase& c = cases[s.case_idx];
    Volume obs = s.axis < 0 ? c.observed : rotate_volume(c.observed, s.axis, s.degrees);
    Volume lab = s.axis < 0 ? c.label : rotate_volume(c.label, s.axis, s.degrees);
    out.templates.push_back(s.axis < 0 ? c.templates
                                       : rotate_templates(c.templates, s.axis, s.degrees));
    std::copy(obs.data.begin(), obs.data.end(), out.x.data() + i * plane);
    std::copy(lab.data.begin(), lab.data.end(), out.y.data() + i * plane);
  }
  return out;
}

struct LossValues {
  double total = 0, mae = 0, ssim = 0, sobel = 0, imbv = 0;
  bool has_ssim = false, has_sobel = false, has_imbv = false;
};

LossValues loss_values(const CompositeLoss& cl) {
  LossValues v;
  v.total = cl.total.value().value();
  v.mae = cl.mae.value().value();
  if (cl.ssim.defined()) {
    v.ssim = cl.ssim.value().value();
    v.has_ssim = true;
  }
  if (cl.sobel.defined()) {
    v.sobel = cl.sobel.value().value();
    v.has_sobel = true;
  }
  if (cl.imbv.defined()) {
    v.imbv = cl.imbv.value().value();
    v.has_imbv = true;
  }
  return v;
}

Checkpoint make_checkpoint(const Model& model, const std::map<std::string, Tensor>& adam_m,
                           const std::map<std::string, Tensor>& adam_v, int64_t step,
                           const Rng& rng, const TrainConfig& cfg) {
  Checkpoint c;
  c.network = model.config;
  c.train_config_json = train_config_to_json(cfg);
  c.step = step;
  c.rng_state = rng.serialize();
  c.tensors = snapshot_parameters(model);
  for (const auto& [name, t] : adam_m) c.tensors.emplace_back("adam.m." + name, t.clone());
  for (const auto& [name, t] : adam_v) c.tensors.emplace_back("adam.v." + name, t.clone());
  return c;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  kernels::set_num_threads(cfg.threads);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "config.json", train_config_to_json(cfg) + "\n");

  const Dataset ds = load_dataset(cfg.dataset_dir);
  auto load_split = [&](const std::string& name) {
    std::vector<LoadedCase> out;
    for (size_t i : ds.split(name)) {
      const DatasetCase& c = ds.cases[i];
      LoadedCase lc;
      lc.observed = read_volume(c.dir / "observed");
      lc.templates = read_labels(c.dir / "labels");
      const fs::path label_base = c.dir / cfg.label_kind;
      if (cfg.label_kind == "iy" && !fs::exists(c.dir / "iy.json"))
        throw IoError("case " + c.id + " has no iY label volume; run `pvckit iy run --cases " +
                      ds.dir.string() + "` first");
      lc.label = read_volume(label_base);
      out.push_back(std::move(lc));
    }
    return out;
  };
  const std::vector<LoadedCase> train_cases = load_split("train");
  const std::vector<LoadedCase> val_cases = load_split("val");
  if (train_cases.empty()) throw ContractError("training split is empty");

  // sample list: originals plus the rotation-augmented volumes
  std::vector<SampleRef> samples;
  for (size_t i = 0; i < train_cases.size(); ++i) {
    samples.push_back({i, -1, 0});
    if (cfg.augment) {
      const int step_deg = cfg.augment_step_degrees;
      if (step_deg < 1 || 360 % step_deg != 0) throw ConfigError("rotation step must divide 360");
      for (int axis = 0; axis < 3; ++axis)
        for (int deg = step_deg; deg < 360; deg += step_deg) samples.push_back({i, axis, deg});
    }
  }
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(samples.size()) + cfg.batch_size - 1) / cfg.batch_size;

  Model model = build(cfg.network, cfg.seed);
  std::map<std::string, Tensor> adam_m, adam_v;
  int64_t step = 0;
  Rng rng(cfg.seed + 0x9e3779b97f4a7c15ull);
  int64_t epoch_start = 0;

  if (!cfg.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(cfg.resume_from);
    model = model_from_checkpoint(ck);
    for (const auto& [name, t] : ck.tensors) {
      if (name.rfind("adam.m.", 0) == 0) adam_m[name.substr(7)] = t;
      else if (name.rfind("adam.v.", 0) == 0) adam_v[name.substr(7)] = t;
    }
    step = ck.step;
    if (!ck.rng_state.empty()) rng.deserialize(ck.rng_state);
    epoch_start = step / steps_per_epoch;
  }

  const AdamConfig adam_cfg{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps};

  auto run_validation = [&]() -> double {
    if (val_cases.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<SampleRef> val_samples;
    for (size_t i = 0; i < val_cases.size(); ++i) val_samples.push_back({i, -1, 0});
    double acc = 0.0;
    int64_t seen = 0;
    for (size_t pos = 0; pos < val_samples.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      std::vector<size_t> idx;
      for (size_t i = pos; i < std::min(pos + static_cast<size_t>(cfg.batch_size), val_samples.size()); ++i)
        idx.push_back(i);
      BatchData b = materialize_batch(val_cases, val_samples, idx);
      Tape tape(false);
      BoundModel bm = bind_model(tape, model);
      Var x = tape.constant(b.x);
      Var y = tape.constant(b.y);
      Var out = bm.forward(x);
      const SsimParams sp = SsimParams::from_reference(b.y);
      const CompositeLoss cl = composite_loss(y, out, b.templates, cfg.weights, sp);
      acc += cl.total.value().value() * static_cast<double>(idx.size());
      seen += static_cast<int64_t>(idx.size());
    }
    return acc / static_cast<double>(seen);
  };

  std::ostringstream log;
  log << "epoch,step,train_total,train_mae,train_ssim,train_sobel,train_imbv,val_total\n";

  TrainResult result;
  result.log_csv = out_dir / "train_log.csv";
  result.best_checkpoint = out_dir / "checkpoint_best.pvck";
  result.final_checkpoint = out_dir / "checkpoint_final.pvck";

  double best_val = std::numeric_limits<double>::infinity();
  int64_t epochs_since_best = 0;
  bool saved_best = false;

  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int64_t epoch = epoch_start; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double ep_total = 0, ep_mae = 0, ep_ssim = 0, ep_sobel = 0, ep_imbv = 0;
    int64_t ep_items = 0;
    bool any_ssim = false, any_sobel = false, any_imbv = false;

    for (int64_t bstart = 0; bstart < static_cast<int64_t>(order.size()); bstart += cfg.batch_size) {
      const int64_t bend = std::min<int64_t>(bstart + cfg.batch_size, static_cast<int64_t>(order.size()));
      std::vector<size_t> idx(order.begin() + bstart, order.begin() + bend);
      BatchData b = materialize_batch(train_cases, samples, idx);

      Tape tape(true);
      BoundModel bm = bind_model(tape, model);
      Var x = tape.constant(b.x);
      Var y = tape.constant(b.y);
      Var out = bm.forward(x);
      const SsimParams sp = SsimParams::from_reference(b.y);
      const CompositeLoss cl = composite_loss(y, out, b.templates, cfg.weights, sp);
      const LossValues lv = loss_values(cl);
      if (!std::isfinite(lv.total))
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(step) + " (mae=" + format_double(lv.mae) +
                    ", ssim=" + format_double(lv.ssim) + ", sobel=" + format_double(lv.sobel) +
                    ", imbv=" + format_double(lv.imbv) + ")");

      Gradients grads = tape.backward(cl.total);
      ++step;
      // parameters are value tensors; each update installs a fresh one
      auto params = model.parameters();
      if (params.size() != bm.params.size()) throw ContractError("parameter enumeration mismatch");
      for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& [name, tensor_ptr] = params[pi];
        const Tensor& g = grads.at(bm.params[pi].second);
        *tensor_ptr = adam_update(*tensor_ptr, g, adam_m[name], adam_v[name], step, adam_cfg);
      }

      const double items = static_cast<double>(idx.size());
      ep_total += lv.total * items;
      ep_mae += lv.mae * items;
      if (lv.has_ssim) { ep_ssim += lv.ssim * items; any_ssim = true; }
      if (lv.has_sobel) { ep_sobel += lv.sobel * items; any_sobel = true; }
      if (lv.has_imbv) { ep_imbv += lv.imbv * items; any_imbv = true; }
      ep_items += static_cast<int64_t>(idx.size());
    }

    const double n = static_cast<double>(ep_items);
    const double val = run_validation();
    log << epoch << ',' << step << ',' << format_double(ep_total / n) << ','
        << format_double(ep_mae / n) << ',' << (any_ssim ? format_double(ep_ssim / n) : "") << ','
        << (any_sobel ? format_double(ep_sobel / n) : "") << ','
        << (any_imbv ? format_double(ep_imbv / n) : "") << ','
        << (std::isnan(val) ? "" : format_double(val)) << '\n';
    write_text_file(result.log_csv, log.str());

    if (epoch == epoch_start) result.first_epoch_loss = ep_total / n;
    result.last_epoch_loss = ep_total / n;
    result.epochs_run = epoch - epoch_start + 1;

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04lld.pvck",
                    static_cast<long long>(epoch + 1));
      save_checkpoint(out_dir / name, make_checkpoint(model, adam_m, adam_v, step, rng, cfg));
    }

    if (!std::isnan(val)) {
      if (val < best_val) {
        best_val = val;
        epochs_since_best = 0;
        save_checkpoint(result.best_checkpoint, make_checkpoint(model, adam_m, adam_v, step, rng, cfg));
        saved_best = true;
      } else if (cfg.patience > 0 && ++epochs_since_best >= cfg.patience) {
        break;  // early stop
      }
    }
  }

  result.steps_run = step;
  result.best_val_loss = best_val;
  save_checkpoint(result.final_checkpoint, make_checkpoint(model, adam_m, adam_v, step, rng, cfg));
  if (!saved_best) {
    fs::copy_file(result.final_checkpoint, result.best_checkpoint,
                  fs::copy_options::overwrite_existing);
    result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// ---- evaluation -------------------------------------------------------------------

namespace {

CaseMetricsRow score_method(const std::string& case_id, const std::string& method,
                            const Volume& vol, const Volume& iy_ref, const Volume& truth,
                            const TemplateSet& templates, bool heart_only) {
  CaseMetricsRow row;
  row.case_id = case_id;
  row.method = method;
  row.imbv = imbv(vol, templates);
  Volume v = vol, r = iy_ref, t = truth;
  if (heart_only) {
    const std::vector<int64_t> slices = heart_slice_indices(templates);
    v = gather_slices(vol, slices);
    r = gather_slices(iy_ref, slices);
    t = gather_slices(truth, slices);
  }
  row.ssim = ssim_eval(r, v);
  row.psnr = psnr(r, v);
  row.rmse = rmse(r, v);
  row.ssim_truth = ssim_eval(t, v);
  row.psnr_truth = psnr(t, v);
  row.rmse_truth = rmse(t, v);
  return row;
}

json agreement_json(const AgreementReport& a) {
  return json{{"bias", a.ba.bias},
              {"sd", a.ba.sd},
              {"loa_low", a.ba.loa_low},
              {"loa_high", a.ba.loa_high},
              {"n", a.ba.n},
              {"slope", a.fit.slope},
              {"intercept", a.fit.intercept},
              {"r_squared", a.fit.r_squared},
              {"pearson", a.fit.pearson},
              {"degenerate_fit", a.fit.degenerate}};
}

json cohort_json(const CohortTable& table) {
  json out = json::object();
  for (const auto& [method, metrics] : table) {
    json m = json::object();
    for (const auto& [metric, cell] : metrics)
      m[metric] = json{{"mean", cell.mean}, {"sd", cell.sd}, {"n", cell.n}};
    out[method] = m;
  }
  return out;
}

}  // namespace

EvalResult evaluate(const Checkpoint& ckpt, const fs::path& dataset_dir, const EvalOptions& opts,
                    const fs::path& out_dir) {
  kernels::set_num_threads(opts.threads);
  fs::create_directories(out_dir);
  if (ckpt.network.input_channels != 1)
    throw ConfigError("checkpoint expects " + std::to_string(ckpt.network.input_channels) +
                      " input channels but phantom datasets provide a single SPECT channel");
  Model model = model_from_checkpoint(ckpt);
  const Dataset ds = load_dataset(dataset_dir);
  const std::vector<size_t> split = ds.split(opts.split);
  if (split.empty()) throw ContractError("split '" + opts.split + "' has no cases");

  EvalResult result;
  std::vector<double> imbv_iy, imbv_net, imbv_nonpvc;
  for (size_t i : split) {
    const DatasetCase& c = ds.cases[i];
    const Volume observed = read_volume(c.dir / "observed");
    const Volume truth = read_volume(c.dir / "truth");
    const TemplateSet templates = read_labels(c.dir / "labels");
    if (!fs::exists(c.dir / "iy.json"))
      throw IoError("case " + c.id + " has no iY volume; run `pvckit iy run --cases " +
                    dataset_dir.string() + "` first");
    const Volume iy_ref = read_volume(c.dir / "iy");

    const Shape in_shape{1, 1, observed.dims[0], observed.dims[1], observed.dims[2]};
    const Tensor out_t = forward_nograd(model, observed.to_tensor().reshaped(in_shape));
    Volume net_out = Volume::from_tensor(
        out_t.reshaped(Shape{observed.dims[0], observed.dims[1], observed.dims[2]}),
        observed.spacing_mm);

    result.rows.push_back(score_method(c.id, "non_pvc", observed, iy_ref, truth, templates,
                                       opts.heart_slices_only));
    result.rows.push_back(
        score_method(c.id, "network", net_out, iy_ref, truth, templates, opts.heart_slices_only));
    result.rows.push_back(
        score_method(c.id, "iy", iy_ref, iy_ref, truth, templates, opts.heart_slices_only));
    imbv_nonpvc.push_back(result.rows[result.rows.size() - 3].imbv);
    imbv_net.push_back(result.rows[result.rows.size() - 2].imbv);
    imbv_iy.push_back(result.rows[result.rows.size() - 1].imbv);
  }

  if (imbv_iy.size() >= 2) {
    result.network_vs_iy = agreement(imbv_iy, imbv_net);
    result.nonpvc_vs_iy = agreement(imbv_iy, imbv_nonpvc);
  }

  result.metrics_csv = out_dir / "metrics.csv";
  write_text_file(result.metrics_csv, metrics_csv_text(result.rows));

  json summary{{"split", opts.split},
               {"heart_slices_only", opts.heart_slices_only},
               {"n_cases", split.size()},
               {"network", json::parse(network_config_to_json(ckpt.network))},
               {"cohort", cohort_json(cohort_table(result.rows))},
               {"agreement_vs_iy",
                json{{"network", agreement_json(result.network_vs_iy)},
                     {"non_pvc", agreement_json(result.nonpvc_vs_iy)}}}};
  result.summary_json = out_dir / "summary.json";
  write_text_file(result.summary_json, summary.dump(2) + "\n");
  return result;
}

// ---- metrics CSV + report -----------------------------------------------------------

std::string metrics_csv_text(const std::vector<CaseMetricsRow>& rows) {
  std::ostringstream os;
  os << "case,method,imbv,ssim,psnr,rmse,ssim_truth,psnr_truth,rmse_truth\n";
  for (const CaseMetricsRow& r : rows) {
    os << csv_quote(r.case_id) << ',' << csv_quote(r.method) << ',' << format_double(r.imbv) << ','
       << format_double(r.ssim) << ',' << format_double(r.psnr) << ',' << format_double(r.rmse)
       << ',' << format_double(r.ssim_truth) << ',' << format_double(r.psnr_truth) << ','
       << format_double(r.rmse_truth) << '\n';
  }
  return os.str();
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_metric(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

}  // namespace

std::vector<CaseMetricsRow> read_metrics_csv(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty metrics CSV " + path.string());
  std::vector<CaseMetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != 9) throw IoError("metrics CSV row with " + std::to_string(f.size()) + " fields");
    CaseMetricsRow r;
    r.case_id = f[0];
    r.method = f[1];
    r.imbv = parse_metric(f[2]);
    r.ssim = parse_metric(f[3]);
    r.psnr = parse_metric(f[4]);
    r.rmse = parse_metric(f[5]);
    r.ssim_truth = parse_metric(f[6]);
    r.psnr_truth = parse_metric(f[7]);
    r.rmse_truth = parse_metric(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_report(const std::vector<CaseMetricsRow>& rows, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const CohortTable table = cohort_table(rows);
  std::ostringstream os;
  os << "method,metric,mean,sd,n\n";
  for (const auto& [method, metrics] : table)
    for (const auto& [metric, cell] : metrics)
      os << csv_quote(method) << ',' << csv_quote(metric) << ',' << format_double(cell.mean) << ','
         << format_double(cell.sd) << ',' << cell.n << '\n';
  write_text_file(out_dir / "cohort.csv", os.str());

  // per-method IMBV agreement against the iY rows
  std::map<std::string, std::vector<double>> imbv_by_method;
  for (const CaseMetricsRow& r : rows) imbv_by_method[r.method].push_back(r.imbv);
  json agr = json::object();
  const auto it = imbv_by_method.find("iy");
  if (it != imbv_by_method.end() && it->second.size() >= 2) {
    for (const auto& [method, vals] : imbv_by_method) {
      if (method == "iy" || vals.size() != it->second.size()) continue;
      agr[method] = agreement_json(agreement(it->second, vals));
    }
  }
  json summary{{"cohort", cohort_json(table)}, {"agreement_vs_iy", agr}};
  write_text_file(out_dir / "report.json", summary.dump(2) + "\n");
}

}  // namespace pvckit
