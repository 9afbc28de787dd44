#include "sstdunet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

namespace sstdunet {

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  schedule.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (augment_enabled) augment.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"model", c.model},
      {"loss", {{"alpha", c.loss.alpha}, {"gamma", c.loss.gamma}}},
      {"schedule",
       {{"learning_rate", c.schedule.target},
        {"warmup_epochs", c.schedule.warmup_epochs},
        {"total_epochs", c.schedule.total_epochs},
        {"start_fraction", c.schedule.start_fraction},
        {"end_fraction", c.schedule.end_fraction}}},
      {"weight_decay", c.optim.weight_decay},
      {"batch_size", c.batch_size},
      {"max_steps", c.max_steps},
      {"seed", c.seed},
      {"augment_enabled", c.augment_enabled},
      {"augment",
       {{"noise_sigma", c.augment.noise_sigma},
        {"blur_sigma", c.augment.blur_sigma},
        {"brightness", c.augment.brightness},
        {"contrast", c.augment.contrast},
        {"lowres_factor", c.augment.lowres_factor},
        {"gamma", c.augment.gamma}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.model = j.value("model", nlohmann::json::object()).get<ModelConfig>();
  const auto loss = j.value("loss", nlohmann::json::object());
  c.loss.alpha = loss.value("alpha", d.loss.alpha);
  c.loss.gamma = loss.value("gamma", d.loss.gamma);
  const auto sch = j.value("schedule", nlohmann::json::object());
  c.schedule.target = sch.value("learning_rate", d.schedule.target);
  c.schedule.warmup_epochs = sch.value("warmup_epochs", d.schedule.warmup_epochs);
  c.schedule.total_epochs = sch.value("total_epochs", d.schedule.total_epochs);
  c.schedule.start_fraction = sch.value("start_fraction", d.schedule.start_fraction);
  c.schedule.end_fraction = sch.value("end_fraction", d.schedule.end_fraction);
  c.optim.weight_decay = j.value("weight_decay", d.optim.weight_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.seed = j.value("seed", d.seed);
  c.augment_enabled = j.value("augment_enabled", d.augment_enabled);
  const auto aug = j.value("augment", nlohmann::json::object());
  c.augment.noise_sigma = aug.value("noise_sigma", d.augment.noise_sigma);
  c.augment.blur_sigma = aug.value("blur_sigma", d.augment.blur_sigma);
  c.augment.brightness = aug.value("brightness", d.augment.brightness);
  c.augment.contrast = aug.value("contrast", d.augment.contrast);
  c.augment.lowres_factor = aug.value("lowres_factor", d.augment.lowres_factor);
  c.augment.gamma = aug.value("gamma", d.augment.gamma);
}

Tensor<float> volume_to_tensor(const Volume& v) {
  if (v.is_4d()) throw ContractError("volume_to_tensor expects a 3D volume");
  const std::size_t nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  Tensor<float> t(Shape{1, 1, nx, ny, nz});
  auto& out = t.data();
  std::size_t o = 0;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z, ++o) out[o] = v.at(x, y, z);
  return t;
}

Volume tensor_to_volume(const Tensor<float>& t, std::array<double, 3> spacing) {
  if (t.ndim() != 5 || t.dim(0) != 1 || t.dim(1) != 1)
    throw ShapeError("tensor_to_volume expects [1,1,D,H,W], got " + shape_str(t.shape()));
  Volume v;
  v.dims = {t.dim(2), t.dim(3), t.dim(4)};
  v.spacing = spacing;
  v.data.resize(v.voxels());
  const auto& in = t.data();
  std::size_t o = 0;
  for (std::size_t x = 0; x < v.dims[0]; ++x)
    for (std::size_t y = 0; y < v.dims[1]; ++y)
      for (std::size_t z = 0; z < v.dims[2]; ++z, ++o) v.at(x, y, z) = in[o];
  return v;
}

namespace {

std::array<std::size_t, 3> model_grid(const ModelConfig& m) {
  return {m.input[0], m.input[1], m.input[2]};
}

// Mask dims mirror the volume's {x,y,z}, but mask data is W (= z) fastest
// while volume data is x fastest, so both directions transpose.
Mask3D mask_from_volume(const Volume& v, double threshold = 0.5) {
  Mask3D m;
  m.dims = {v.dims[0], v.dims[1], v.dims[2]};
  m.data.resize(v.data.size());
  std::size_t o = 0;
  for (std::size_t x = 0; x < v.dims[0]; ++x)
    for (std::size_t y = 0; y < v.dims[1]; ++y)
      for (std::size_t z = 0; z < v.dims[2]; ++z, ++o)
        m.data[o] = v.at(x, y, z) >= float(threshold) ? 1 : 0;
  return m;
}

Volume volume_from_mask(const Mask3D& m, std::array<double, 3> spacing) {
  Volume v;
  v.dims = {m.dims[0], m.dims[1], m.dims[2]};
  v.spacing = spacing;
  v.data.resize(m.data.size());
  std::size_t o = 0;
  for (std::size_t x = 0; x < v.dims[0]; ++x)
    for (std::size_t y = 0; y < v.dims[1]; ++y)
      for (std::size_t z = 0; z < v.dims[2]; ++z, ++o) v.at(x, y, z) = float(m.data[o]);
  return v;
}

double mask_dice(const Mask3D& truth, const Mask3D& pred) {
  return seg_metrics(truth, pred).dice;
}

Tensor<float> stack_cases(const std::vector<const Volume*>& images) {
  const auto& d = images.front()->dims;
  Tensor<float> batch(Shape{images.size(), 1, d[0], d[1], d[2]});
  const std::size_t n = images.front()->voxels();
  for (std::size_t b = 0; b < images.size(); ++b) {
    Tensor<float> one = volume_to_tensor(*images[b]);
    std::copy_n(one.data().begin(), n, batch.data().begin() + long(b * n));
  }
  return batch;
}

// Mask data is already z fastest (the tensor's spatial order), but route
// through the volume conversions anyway to keep one layout authority.
Tensor<float> stack_masks(const std::vector<const Mask3D*>& masks) {
  const auto& d = masks.front()->dims;
  Tensor<float> batch(Shape{masks.size(), 1, d[0], d[1], d[2]});
  const std::size_t n = masks.front()->data.size();
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b]->dims != d) throw ShapeError("mask shape mismatch in batch");
    Tensor<float> one = volume_to_tensor(volume_from_mask(*masks[b], {1, 1, 1}));
    std::copy_n(one.data().begin(), n, batch.data().begin() + long(b * n));
  }
  return batch;
}

}  // namespace

TrainCase load_case(const ManifestEntry& entry, const ModelConfig& model) {
  TrainCase c;
  c.subject = entry.subject_id;
  Volume img = read_nifti(entry.path);
  if (img.is_4d()) img = temporal_mean(img);
  c.image = normalize(resize(img, model_grid(model), ResizeMode::kTrilinear));
  if (!entry.mask.empty()) {
    Volume m = read_nifti(entry.mask);
    if (m.is_4d()) m = temporal_mean(m);
    c.truth = mask_from_volume(resize(m, model_grid(model), ResizeMode::kNearest));
  }
  return c;
}

TrainResult train(const std::vector<TrainCase>& cases,
                  const std::vector<std::string>& val_subjects, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const bool is_val = std::find(val_subjects.begin(), val_subjects.end(),
                                  cases[i].subject) != val_subjects.end();
    (is_val ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) throw TrainingError("no training cases");
  for (const auto& c : cases) {
    if (c.image.dims != model_grid(cfg.model))
      throw ShapeError("case " + c.subject + " is not on the model grid");
    if (c.truth.data.empty())
      throw TrainingError("case " + c.subject + " has no truth mask");
  }

  std::filesystem::create_directories(out_dir);
  SstDUNetParams<float> model(cfg.model);
  init_weights(model, cfg.seed);
  auto params = model.collect();
  AdamWState<float> opt_state;
  std::mt19937_64 order_rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ull);

  auto forward_dice = [&](const TrainCase& c) {
    Tensor<float> y = model_forward(volume_to_tensor(c.image), model);
    return mask_dice(c.truth, mask_from_volume(tensor_to_volume(y)));
  };

  TrainResult result;
  std::ofstream log(out_dir + "/train_log.jsonl");
  double best = -1.0;
  const std::string ckpt = out_dir + "/best.ckpt";
  bool stop = false;

  for (std::size_t epoch = 0; epoch < cfg.schedule.total_epochs && !stop; ++epoch) {
    const double lr = lr_at(epoch, cfg.schedule);
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t pos = 0; pos < order.size() && !stop; pos += cfg.batch_size) {
      const std::size_t take = std::min(cfg.batch_size, order.size() - pos);
      std::vector<Volume> augmented(take);
      std::vector<const Volume*> imgs(take);
      std::vector<const Mask3D*> masks(take);
      for (std::size_t b = 0; b < take; ++b) {
        const TrainCase& c = cases[order[pos + b]];
        if (cfg.augment_enabled) {
          AugmentConfig a = cfg.augment;
          a.seed = cfg.seed ^ (epoch * 1000003ull + order[pos + b] * 7919ull + 1);
          augmented[b] = augment(c.image, a);
          imgs[b] = &augmented[b];
        } else {
          imgs[b] = &c.image;
        }
        masks[b] = &c.truth;
      }
      Tensor<float> x = stack_cases(imgs);
      Tensor<float> t = stack_masks(masks);
      Tensor<float> y = model_forward(x, model);
      Tensor<float> loss = combo_loss(y, t, cfg.loss);
      const double lv = double(loss.item());
      if (!std::isfinite(lv))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(result.steps_run));
      loss.backward();
      adamw_step(params, opt_state, lr, cfg.optim);
      zero_grads(params);
      loss_sum += lv;
      ++batches;
      ++result.steps_run;
      if (cfg.max_steps && result.steps_run >= cfg.max_steps) stop = true;
    }

    double val_dice = std::numeric_limits<double>::quiet_NaN();
    if (!val_idx.empty()) {
      double acc = 0.0;
      for (std::size_t i : val_idx) acc += forward_dice(cases[i]);
      val_dice = acc / double(val_idx.size());
    }
    EpochRecord rec{epoch, lr, batches ? loss_sum / double(batches) : 0.0, val_dice};
    result.records.push_back(rec);
    nlohmann::json jr{{"epoch", rec.epoch}, {"lr", rec.lr}, {"train_loss", rec.train_loss}};
    if (!val_idx.empty()) jr["val_dice"] = rec.val_dice;
    log << jr.dump() << '\n';

    const double score = val_idx.empty() ? -rec.train_loss : val_dice;
    if (score > best) {
      best = score;
      save_checkpoint(model, ckpt);
      result.best_val_dice = val_idx.empty() ? 0.0 : val_dice;
    }
  }

  double train_dice_acc = 0.0;
  for (std::size_t i : train_idx) train_dice_acc += forward_dice(cases[i]);
  result.final_train_dice = train_dice_acc / double(train_idx.size());
  result.checkpoint_path = ckpt;
  result.param_checksum = param_checksum(params);
  return result;
}

TrainResult train(const std::vector<ManifestEntry>& entries, const TrainConfig& cfg,
                  const std::string& out_dir) {
  std::vector<TrainCase> cases;
  std::vector<std::string> val;
  for (const auto& e : entries) {
    if (e.split == "test") continue;
    cases.push_back(load_case(e, cfg.model));
    if (e.split == "val") val.push_back(e.subject_id);
  }
  return train(cases, val, cfg, out_dir);
}

Prediction predict(const SstDUNetParams<float>& model, const Volume& native) {
  const auto t0 = std::chrono::steady_clock::now();
  Volume img = native.is_4d() ? temporal_mean(native) : native;
  const auto native_dims = img.dims;
  img = normalize(resize(img, model_grid(model.cfg), ResizeMode::kTrilinear));
  Tensor<float> prob = model_forward(volume_to_tensor(img), model);

  Prediction out;
  out.probability = tensor_to_volume(prob, img.spacing);
  Mask3D grid_mask = binarize(out.probability, 0.5);
  grid_mask = largest_component(grid_mask, 26, &out.empty);
  Volume back = resize(volume_from_mask(grid_mask, out.probability.spacing), native_dims,
                       ResizeMode::kNearest);
  out.native_mask = mask_from_volume(back);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

EvalOutcome evaluate(const SstDUNetParams<float>& model, const std::vector<EvalCase>& cases) {
  EvalOutcome out;
  for (const auto& c : cases) {
    if (c.truth.data.empty()) {
      out.missing_masks.push_back(c.subject);
      continue;
    }
    Prediction p = predict(model, c.image);
    auto s = seg_metrics(c.truth, p.native_mask);
    double hd = 0.0;
    if (!p.empty) hd = hausdorff(c.truth, p.native_mask);
    else hd = std::numeric_limits<double>::infinity();
    out.report.rows.push_back({c.subject, s.dice, s.ppv, hd, s.sen});
  }
  return out;
}

EvalOutcome evaluate(const SstDUNetParams<float>& model,
                     const std::vector<ManifestEntry>& entries) {
  std::vector<EvalCase> cases;
  for (const auto& e : entries) {
    EvalCase c;
    c.subject = e.subject_id;
    Volume img = read_nifti(e.path);
    c.image = img.is_4d() ? temporal_mean(img) : img;
    if (!e.mask.empty()) {
      Volume m = read_nifti(e.mask);
      if (m.is_4d()) m = temporal_mean(m);
      if (m.dims != c.image.dims)
        throw ShapeError("mask grid mismatch for subject " + e.subject_id);
      c.truth = mask_from_volume(m);
    }
    cases.push_back(std::move(c));
  }
  return evaluate(model, cases);
}

std::vector<double> default_noise_levels() {
  std::vector<double> levels;
  for (int pct = 1; pct <= 15; pct += 2) levels.push_back(pct / 100.0);
  return levels;
}

std::vector<NoiseSweepRow> noise_sweep(const SstDUNetParams<float>& model,
                                       const std::vector<EvalCase>& cases,
                                       const std::vector<double>& levels,
                                       std::uint64_t seed) {
  std::vector<NoiseSweepRow> rows;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    std::vector<EvalCase> noisy = cases;
    for (std::size_t s = 0; s < noisy.size(); ++s)
      noisy[s].image =
          rician_noise(noisy[s].image, levels[li], seed ^ (li * 100057ull + s * 613ull));
    NoiseSweepRow row;
    row.level = levels[li];
    row.report = evaluate(model, noisy).report;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// Per subject: R x T matrix of masked ROI means. Returns false in ok[r] when
// the ROI is empty after masking.
void roi_means(const Volume& series, const Mask3D& mask, const FcConfig& cfg,
               std::vector<std::vector<double>>& out, std::vector<std::uint8_t>& ok) {
  const std::size_t R = cfg.num_rois, T = series.nt, n = series.voxels();
  if (cfg.labels.voxels() != n || mask.data.size() != n)
    throw ShapeError("fc labels/mask grid does not match the series");
  out.assign(R, std::vector<double>(T, 0.0));
  ok.assign(R, 1);
  std::vector<std::size_t> counts(R, 0);
  // mask data is z fastest, the series/labels volumes are x fastest
  const auto& d = series.dims;
  std::size_t mi = 0;
  for (std::size_t x = 0; x < d[0]; ++x)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t z = 0; z < d[2]; ++z, ++mi) {
        if (!mask.data[mi]) continue;
        const std::size_t vi = ((z * d[1]) + y) * d[0] + x;
        const long lab = std::lround(double(cfg.labels.data[vi]));
        if (lab < 1 || std::size_t(lab) > R) continue;
        ++counts[std::size_t(lab - 1)];
        for (std::size_t t = 0; t < T; ++t)
          out[std::size_t(lab - 1)][t] += double(series.data[t * n + vi]);
      }
  for (std::size_t r = 0; r < R; ++r) {
    if (counts[r] == 0) {
      ok[r] = 0;
      continue;
    }
    for (auto& v : out[r]) v /= double(counts[r]);
  }
}

}  // namespace

FcMatrix fc_t_matrix(const std::vector<Volume>& series, const std::vector<Mask3D>& masks,
                     const FcConfig& cfg) {
  if (series.empty() || series.size() != masks.size())
    throw ContractError("fc_t_matrix needs one mask per series");
  if (cfg.num_rois < 2) throw ConfigError("fc needs at least 2 ROIs");
  const std::size_t R = cfg.num_rois, S = series.size();

  FcMatrix out;
  out.rois = R;
  out.t.assign(R * R, 0.0);
  out.defined.assign(R, 1);

  // z[s] holds the subject's Fisher-z matrix (upper triangle)
  std::vector<std::vector<double>> z(S, std::vector<double>(R * R, 0.0));
  for (std::size_t s = 0; s < S; ++s) {
    if (series[s].nt < 3) throw ContractError("fc series needs at least 3 time points");
    std::vector<std::vector<double>> means;
    std::vector<std::uint8_t> ok;
    roi_means(series[s], masks[s], cfg, means, ok);
    for (std::size_t r = 0; r < R; ++r)
      if (!ok[r]) out.defined[r] = 0;
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = i + 1; j < R; ++j) {
        if (!ok[i] || !ok[j]) continue;
        auto pr = pearson(means[i], means[j]);
        if (!pr.defined) {
          out.defined[i] = out.defined[j] = 0;
          continue;
        }
        const double zv = fisher_z(pr.r);
        if (!std::isfinite(zv)) {
          out.defined[i] = out.defined[j] = 0;
          continue;
        }
        z[s][i * R + j] = zv;
      }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < R; ++i) {
    out.t[i * R + i] = nan;  // diagonal undefined by contract
    for (std::size_t j = i + 1; j < R; ++j) {
      double tv = nan;
      if (out.defined[i] && out.defined[j]) {
        std::vector<double> samples(S);
        for (std::size_t s = 0; s < S; ++s) samples[s] = z[s][i * R + j];
        tv = t_test_one_sample(samples, 0.0, Tail::kGreater).statistic;
      }
      out.t[i * R + j] = tv;
      out.t[j * R + i] = tv;
    }
  }
  return out;
}

FcResult fc_analysis(const std::vector<Volume>& series, const std::vector<Mask3D>& masks_a,
                     const std::vector<Mask3D>& masks_b, const FcConfig& cfg) {
  FcResult res;
  res.a = fc_t_matrix(series, masks_a, cfg);
  res.b = fc_t_matrix(series, masks_b, cfg);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < cfg.num_rois; ++i)
    for (std::size_t j = i + 1; j < cfg.num_rois; ++j) {
      const double va = res.a.at(i, j), vb = res.b.at(i, j);
      if (!std::isfinite(va) || !std::isfinite(vb)) continue;
      xs.push_back(vb);
      ys.push_back(va);
    }
  res.compared_pairs = xs.size();
  res.comparison = linear_fit(xs, ys);
  return res;
}

}  // namespace sstdunet
