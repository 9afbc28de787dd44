#ifndef SSTDUNET_PIPELINE_HPP
#define SSTDUNET_PIPELINE_HPP

#include "sstdunet/data.hpp"
#include "sstdunet/loss.hpp"
#include "sstdunet/metrics.hpp"
#include "sstdunet/network.hpp"
#include "sstdunet/optim.hpp"
#include "sstdunet/postproc.hpp"
#include "sstdunet/stats.hpp"
#include "sstdunet/volume.hpp"

namespace sstdunet {

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  LrSchedule schedule;
  AdamWConfig optim;
  std::size_t batch_size = 2;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 0;
  bool augment_enabled = false;
  AugmentConfig augment;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Tensor layout convention: tensor spatial axes (D,H,W) map to volume axes
// (x,y,z), so ModelConfig::input is the resized volume extent in x,y,z order.
Tensor<float> volume_to_tensor(const Volume& v);
Volume tensor_to_volume(const Tensor<float>& t, std::array<double, 3> spacing = {1, 1, 1});

// Image in model grid ([0,1] normalized) plus its model-grid truth mask.
struct TrainCase {
  std::string subject;
  Volume image;
  Mask3D truth;
};

// read -> temporal mean -> resize (trilinear) -> normalize; the mask resizes
// nearest and re-binarizes.
TrainCase load_case(const ManifestEntry& entry, const ModelConfig& model);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_dice = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::string checkpoint_path;
  double best_val_dice = 0.0;
  double final_train_dice = 0.0;  // mean over training cases with final weights
  std::size_t steps_run = 0;
  std::uint64_t param_checksum = 0;
};

// Entries with split == "val" form the validation set; split == "test" is
// ignored; everything else trains. Writes best.ckpt and train_log.jsonl
// under out_dir.
TrainResult train(const std::vector<TrainCase>& cases,
                  const std::vector<std::string>& val_subjects, const TrainConfig& cfg,
                  const std::string& out_dir);
TrainResult train(const std::vector<ManifestEntry>& entries, const TrainConfig& cfg,
                  const std::string& out_dir);

struct Prediction {
  Mask3D native_mask;      // back on the input grid
  Volume probability;      // model grid
  double seconds = 0.0;
  bool empty = false;      // no foreground survived post-processing
};

// resize -> normalize -> forward -> threshold 0.5 -> largest component ->
// nearest resize back to the native grid.
Prediction predict(const SstDUNetParams<float>& model, const Volume& native);

struct EvalCase {
  std::string subject;
  Volume image;   // native grid
  Mask3D truth;   // native grid
};

struct EvalOutcome {
  MetricsReport report;
  std::vector<std::string> missing_masks;
};

EvalOutcome evaluate(const SstDUNetParams<float>& model, const std::vector<EvalCase>& cases);
EvalOutcome evaluate(const SstDUNetParams<float>& model,
                     const std::vector<ManifestEntry>& entries);

std::vector<double> default_noise_levels();  // 0.01 .. 0.15 step 0.02

struct NoiseSweepRow {
  double level = 0.0;
  MetricsReport report;
};

std::vector<NoiseSweepRow> noise_sweep(const SstDUNetParams<float>& model,
                                       const std::vector<EvalCase>& cases,
                                       const std::vector<double>& levels,
                                       std::uint64_t seed);

struct FcConfig {
  Volume labels;           // integer ROI labels 1..num_rois, 0 background
  std::size_t num_rois = 0;
};

struct FcMatrix {
  std::size_t rois = 0;
  std::vector<double> t;           // row-major R x R, symmetric
  std::vector<std::uint8_t> defined;  // per ROI; empty-ROI rows are undefined

  double at(std::size_t i, std::size_t j) const { return t[i * rois + j]; }
};

// Per subject: masked ROI mean time series -> Pearson -> Fisher z; then a
// one-sided (greater) one-sample t-test across subjects per ROI pair.
FcMatrix fc_t_matrix(const std::vector<Volume>& series, const std::vector<Mask3D>& masks,
                     const FcConfig& cfg);

struct FcResult {
  FcMatrix a, b;
  LinearFit comparison;  // y = entries of a over x = entries of b
  std::size_t compared_pairs = 0;
};

FcResult fc_analysis(const std::vector<Volume>& series, const std::vector<Mask3D>& masks_a,
                     const std::vector<Mask3D>& masks_b, const FcConfig& cfg);

}  // namespace sstdunet

#endif
