// Command line front end. Exit codes:
//   0 success
//   2 usage or configuration error (unknown flag/key, invalid value)
//   3 file format error (NIfTI, manifest, checkpoint, config file)
//   4 data contract violation (shape mismatch, missing inputs)
//   5 training failure (non-finite loss or gradient)
//   6 gradient check above tolerance
//   1 anything else
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "sstdunet/gradcheck.hpp"
#include "sstdunet/pipeline.hpp"

using namespace sstdunet;

namespace {

void fail(const std::string& category, const std::string& message) {
  nlohmann::json j{{"error", category}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown config key '" + key + "' in " + where);
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  reject_unknown_keys(j, {"model", "loss", "schedule", "weight_decay", "batch_size",
                          "max_steps", "seed", "augment_enabled", "augment"},
                      path);
  if (j.contains("model"))
    reject_unknown_keys(j["model"],
                        {"input", "in_channels", "cnn_widths", "bridge_channels",
                         "sst_base_channels", "sst_head_dim", "sst_window", "sst_stages",
                         "sst_proj_channels", "leaky_slope"},
                        path + ":model");
  if (j.contains("loss")) reject_unknown_keys(j["loss"], {"alpha", "gamma"}, path + ":loss");
  if (j.contains("schedule"))
    reject_unknown_keys(j["schedule"],
                        {"learning_rate", "warmup_epochs", "total_epochs", "start_fraction",
                         "end_fraction"},
                        path + ":schedule");
  if (j.contains("augment"))
    reject_unknown_keys(j["augment"],
                        {"noise_sigma", "blur_sigma", "brightness", "contrast",
                         "lowres_factor", "gamma"},
                        path + ":augment");
  return j.get<TrainConfig>();
}

Mask3D mask_from(const Volume& v) {
  Volume m = v.is_4d() ? temporal_mean(v) : v;
  return binarize(m, 0.5);
}

// mask data is z fastest, volume data x fastest
Volume volume_from(const Mask3D& m, std::array<double, 3> spacing) {
  Volume v;
  v.dims = m.dims;
  v.spacing = spacing;
  v.data.resize(m.data.size());
  std::size_t o = 0;
  for (std::size_t x = 0; x < m.dims[0]; ++x)
    for (std::size_t y = 0; y < m.dims[1]; ++y)
      for (std::size_t z = 0; z < m.dims[2]; ++z, ++o) v.at(x, y, z) = float(m.data[o]);
  return v;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir, const CLI::App& sub, std::uint64_t seed,
              std::size_t epochs, double lr, std::size_t batch, std::size_t max_steps) {
  TrainConfig cfg = load_train_config(config_path);
  if (sub.count("--seed")) cfg.seed = seed;
  if (sub.count("--epochs")) cfg.schedule.total_epochs = epochs;
  if (sub.count("--lr")) cfg.schedule.target = lr;
  if (sub.count("--batch-size")) cfg.batch_size = batch;
  if (sub.count("--max-steps")) cfg.max_steps = max_steps;
  cfg.validate();

  auto entries = read_manifest(manifest_path);
  auto res = train(entries, cfg, out_dir);
  nlohmann::json j{{"checkpoint", res.checkpoint_path},
                   {"epochs", res.records.size()},
                   {"steps", res.steps_run},
                   {"best_val_dice", res.best_val_dice},
                   {"final_train_dice", res.final_train_dice}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input,
                const std::string& output, const std::string& prob_path) {
  auto model = load_checkpoint<float>(ckpt);
  Volume native = read_nifti(input);
  Prediction p = predict(model, native);
  write_nifti(volume_from(p.native_mask, native.spacing), output);
  if (!prob_path.empty()) write_nifti(p.probability, prob_path);
  nlohmann::json j{{"output", output}, {"seconds", p.seconds}, {"empty", p.empty}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& manifest_path,
                 const std::string& csv_path, const std::string& json_path) {
  auto model = load_checkpoint<float>(ckpt);
  auto entries = read_manifest(manifest_path);
  auto out = evaluate(model, entries);
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw ParseError("cannot open for write: " + csv_path);
    out.report.write_csv(os);
  }
  if (!json_path.empty()) {
    std::ofstream os(json_path);
    if (!os) throw ParseError("cannot open for write: " + json_path);
    os << out.report.to_json() << "\n";
  }
  auto m = out.report.mean();
  auto s = out.report.stddev();
  nlohmann::json j{{"subjects", out.report.rows.size()},
                   {"mean_dice", m.dice},
                   {"std_dice", s.dice},
                   {"mean_hd", m.hd},
                   {"missing_masks", out.missing_masks}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_noise_sweep(const std::string& ckpt, const std::string& manifest_path,
                    const std::vector<double>& level_args, std::uint64_t seed,
                    const std::string& csv_path) {
  auto model = load_checkpoint<float>(ckpt);
  auto entries = read_manifest(manifest_path);
  std::vector<EvalCase> cases;
  for (const auto& e : entries) {
    if (e.mask.empty()) throw ContractError("noise sweep needs a mask for " + e.subject_id);
    EvalCase c;
    c.subject = e.subject_id;
    Volume img = read_nifti(e.path);
    c.image = img.is_4d() ? temporal_mean(img) : img;
    c.truth = mask_from(read_nifti(e.mask));
    cases.push_back(std::move(c));
  }
  auto levels = level_args.empty() ? default_noise_levels() : level_args;
  auto rows = noise_sweep(model, cases, levels, seed);

  std::ostringstream csv;
  csv << "level,mean_dice,std_dice,mean_ppv,mean_hd,mean_sen\n";
  nlohmann::json jl = nlohmann::json::array();
  for (const auto& r : rows) {
    auto m = r.report.mean();
    auto s = r.report.stddev();
    csv << r.level << ',' << m.dice << ',' << s.dice << ',' << m.ppv << ',' << m.hd << ','
        << m.sen << "\n";
    jl.push_back({{"level", r.level}, {"mean_dice", m.dice}, {"mean_hd", m.hd}});
  }
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw ParseError("cannot open for write: " + csv_path);
    os << csv.str();
  } else {
    std::cout << csv.str();
  }
  std::cout << nlohmann::json{{"levels", jl}}.dump() << "\n";
  return 0;
}

int cmd_fc(const std::string& manifest_a, const std::string& manifest_b,
           const std::string& labels_path, std::size_t rois, const std::string& out_path) {
  auto ea = read_manifest(manifest_a);
  auto eb = read_manifest(manifest_b);
  if (ea.size() != eb.size())
    throw ContractError("fc manifests must list the same subjects in the same order");
  FcConfig cfg;
  cfg.labels = read_nifti(labels_path);
  cfg.num_rois = rois;
  std::vector<Volume> series;
  std::vector<Mask3D> masks_a, masks_b;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].subject_id != eb[i].subject_id)
      throw ContractError("fc manifests disagree at subject " + ea[i].subject_id);
    if (ea[i].mask.empty() || eb[i].mask.empty())
      throw ContractError("fc needs a mask per subject, missing for " + ea[i].subject_id);
    series.push_back(read_nifti(ea[i].path));
    masks_a.push_back(mask_from(read_nifti(ea[i].mask)));
    masks_b.push_back(mask_from(read_nifti(eb[i].mask)));
  }
  auto res = fc_analysis(series, masks_a, masks_b, cfg);

  nlohmann::json j{{"rois", res.a.rois},
                   {"compared_pairs", res.compared_pairs},
                   {"slope", res.comparison.slope},
                   {"intercept", res.comparison.intercept},
                   {"r", res.comparison.r}};
  if (!out_path.empty()) {
    nlohmann::json full = j;
    full["t_a"] = res.a.t;
    full["t_b"] = res.b.t;
    full["defined_a"] = res.a.defined;
    full["defined_b"] = res.b.defined;
    std::ofstream os(out_path);
    if (!os) throw ParseError("cannot open for write: " + out_path);
    os << full.dump() << "\n";
  }
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_gradcheck(double tolerance, std::size_t coords, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input = {16, 16, 16};
  cfg.cnn_widths = {4, 6, 8};
  cfg.bridge_channels = 8;
  cfg.sst_base_channels = 4;
  cfg.sst_head_dim = 4;
  cfg.sst_proj_channels = 4;

  SstDUNetParams<double> model{cfg};
  init_weights(model, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Tensor<double> x(Shape{1, 1, 16, 16, 16});
  for (auto& v : x.data()) v = dist(rng);
  x.set_requires_grad(true);

  std::vector<Tensor<double>> leaves{x};
  for (auto& p : model.collect()) {
    if (p.name == "stem.w" || p.name == "down1.w2" || p.name == "bridge.w1" ||
        p.name == "up0.wt" || p.name == "up1.wf" || p.name == "head.w" ||
        p.name == "sst.stage1.block1.wmsa.wq" ||
        p.name == "sst.stage1.block1.smart_mask.bias" || p.name == "sst.merge1.w" ||
        p.name == "sst_proj1.w")
      leaves.push_back(p.tensor);
  }
  auto rep = check_gradients<double>([&] { return sum(model_forward(x, model)); }, leaves,
                                     1e-5, coords);
  std::cout << "max relative error: " << rep.max_rel_error << " over " << rep.checked
            << " coordinates\n";
  if (!rep.passed(tolerance)) {
    fail("gradcheck", "max relative error exceeds tolerance");
    return 6;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SST-DUNet skull stripping pipeline"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, manifest_b, out_dir = ".";
  std::string ckpt, input_path, output_path, prob_path, csv_path, json_path, labels_path;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, batch = 0, max_steps = 0, rois = 0, coords = 4;
  double lr = 0.0, tolerance = 1e-3;
  std::vector<double> levels;

  auto* t = app.add_subcommand("train", "Train a model from a manifest");
  t->add_option("--config", config_path, "Training config JSON")->required();
  t->add_option("--manifest", manifest_path, "JSON-lines dataset manifest")->required();
  t->add_option("--out", out_dir, "Output directory");
  t->add_option("--seed", seed, "Override config seed");
  t->add_option("--epochs", epochs, "Override total epochs");
  t->add_option("--lr", lr, "Override target learning rate");
  t->add_option("--batch-size", batch, "Override batch size");
  t->add_option("--max-steps", max_steps, "Override optimizer step cap");

  auto* p = app.add_subcommand("predict", "Skull-strip one volume");
  p->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  p->add_option("--input", input_path, "Input NIfTI volume")->required();
  p->add_option("--output", output_path, "Output mask NIfTI")->required();
  p->add_option("--prob", prob_path, "Also write the model-grid probability volume");

  auto* e = app.add_subcommand("evaluate", "Score predictions against truth masks");
  e->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  e->add_option("--manifest", manifest_path, "Manifest with mask entries")->required();
  e->add_option("--csv", csv_path, "Write per-subject metrics CSV");
  e->add_option("--json", json_path, "Write per-subject metrics JSON");

  auto* n = app.add_subcommand("noise-sweep", "Evaluate under graded noise");
  n->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  n->add_option("--manifest", manifest_path, "Manifest with mask entries")->required();
  n->add_option("--levels", levels, "Noise fractions (default 0.01..0.15 step 0.02)");
  n->add_option("--seed", seed, "Noise seed");
  n->add_option("--csv", csv_path, "Write per-level CSV (default stdout)");

  auto* f = app.add_subcommand("fc-analyze", "Compare connectivity between two mask sets");
  f->add_option("--manifest-a", manifest_path, "Series+mask manifest, pipeline A")->required();
  f->add_option("--manifest-b", manifest_b, "Series+mask manifest, pipeline B")->required();
  f->add_option("--labels", labels_path, "ROI label volume")->required();
  f->add_option("--rois", rois, "Number of ROIs")->required();
  f->add_option("--out", json_path, "Write full t-matrices JSON");

  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the tiny model");
  g->add_option("--tolerance", tolerance, "Max relative error allowed");
  g->add_option("--coords", coords, "Coordinates checked per leaf");
  g->add_option("--seed", seed, "Weight/input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);
    app.exit(err);
    return 2;
  }

  try {
    if (t->parsed())
      return cmd_train(config_path, manifest_path, out_dir, *t, seed, epochs, lr, batch,
                       max_steps);
    if (p->parsed()) return cmd_predict(ckpt, input_path, output_path, prob_path);
    if (e->parsed()) return cmd_evaluate(ckpt, manifest_path, csv_path, json_path);
    if (n->parsed()) return cmd_noise_sweep(ckpt, manifest_path, levels, seed, csv_path);
    if (f->parsed()) return cmd_fc(manifest_path, manifest_b, labels_path, rois, json_path);
    if (g->parsed()) return cmd_gradcheck(tolerance, coords, seed);
  } catch (const ConfigError& ex) {
    fail("config", ex.what());
    return 2;
  } catch (const ParseError& ex) {
    fail("format", ex.what());
    return 3;
  } catch (const CheckpointError& ex) {
    fail("format", ex.what());
    return 3;
  } catch (const ShapeError& ex) {
    fail("contract", ex.what());
    return 4;
  } catch (const ContractError& ex) {
    fail("contract", ex.what());
    return 4;
  } catch (const TrainingError& ex) {
    fail("training", ex.what());
    return 5;
  } catch (const std::exception& ex) {
    fail("internal", ex.what());
    return 1;
  }
  return 0;
}
