#ifndef SSTDUNET_NETWORK_HPP
#define SSTDUNET_NETWORK_HPP

#include <fstream>

#include "json.hpp"
#include "sstdunet/encoder.hpp"

namespace sstdunet {

struct ModelConfig {
  Extent3 input{128, 128, 64};  // D, H, W
  std::size_t in_channels = 1;
  std::vector<std::size_t> cnn_widths{48, 64, 96, 128, 160};
  std::size_t bridge_channels = 192;
  std::size_t sst_base_channels = 48;
  std::size_t sst_head_dim = 16;
  std::size_t sst_window = 4;
  std::size_t sst_stages = 3;
  std::size_t sst_proj_channels = 32;
  double leaky_slope = 0.01;

  std::size_t levels() const { return cnn_widths.size(); }

  void validate() const {
    if (cnn_widths.empty()) throw ConfigError("cnn_widths must be non-empty");
    if (in_channels == 0 || bridge_channels == 0 || sst_proj_channels == 0)
      throw ConfigError("channel counts must be positive");
    if (sst_stages == 0) throw ConfigError("sst_stages must be positive");
    const std::size_t cnn_div = std::size_t(1) << levels();
    const std::size_t sst_div = std::size_t(1) << (sst_stages + 1);
    for (int a = 0; a < 3; ++a) {
      if (input[a] % cnn_div)
        throw ConfigError("input extent " + std::to_string(input[a]) +
                          " not divisible by " + std::to_string(cnn_div));
      if (input[a] % sst_div)
        throw ConfigError("input extent " + std::to_string(input[a]) +
                          " not divisible by " + std::to_string(sst_div));
    }
    for (std::size_t s = 0; s < sst_stages; ++s) {
      if ((sst_base_channels << s) % sst_head_dim)
        throw ConfigError("sst stage channels must divide by head_dim");
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
      throw ConfigError("leaky_slope must be in (0,1)");
  }

  EncoderConfig encoder_config() const {
    EncoderConfig ec;
    ec.in_channels = in_channels;
    ec.base_channels = sst_base_channels;
    ec.head_dim = sst_head_dim;
    ec.window = sst_window;
    ec.stages = sst_stages;
    return ec;
  }

  // Small profile for fast tests: 32x32x16 input, 4 resolution levels.
  static ModelConfig small() {
    ModelConfig c;
    c.input = {32, 32, 16};
    c.cnn_widths = {8, 12, 16, 24};
    c.bridge_channels = 32;
    c.sst_base_channels = 8;
    c.sst_head_dim = 8;
    c.sst_proj_channels = 8;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input", {c.input[0], c.input[1], c.input[2]}},
                     {"in_channels", c.in_channels},
                     {"cnn_widths", c.cnn_widths},
                     {"bridge_channels", c.bridge_channels},
                     {"sst_base_channels", c.sst_base_channels},
                     {"sst_head_dim", c.sst_head_dim},
                     {"sst_window", c.sst_window},
                     {"sst_stages", c.sst_stages},
                     {"sst_proj_channels", c.sst_proj_channels},
                     {"leaky_slope", c.leaky_slope}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  auto inp = j.value("input", std::vector<std::size_t>{d.input[0], d.input[1], d.input[2]});
  if (inp.size() != 3) throw ConfigError("input must have three extents");
  c.input = {inp[0], inp[1], inp[2]};
  c.in_channels = j.value("in_channels", d.in_channels);
  c.cnn_widths = j.value("cnn_widths", d.cnn_widths);
  c.bridge_channels = j.value("bridge_channels", d.bridge_channels);
  c.sst_base_channels = j.value("sst_base_channels", d.sst_base_channels);
  c.sst_head_dim = j.value("sst_head_dim", d.sst_head_dim);
  c.sst_window = j.value("sst_window", d.sst_window);
  c.sst_stages = j.value("sst_stages", d.sst_stages);
  c.sst_proj_channels = j.value("sst_proj_channels", d.sst_proj_channels);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
}

// Two 3x3x3 convs with dense wiring and a residual shortcut:
//   a1 = act(conv(x)); a2 = act(conv([x, a1])); out = a2 + proj(x)
// proj is a 1x1x1 conv, omitted when channel counts already match.
template <typename T>
struct DenseBlockParams {
  Tensor<T> w1, b1, w2, b2;
  bool has_proj = false;
  Tensor<T> wp, bp;

  DenseBlockParams() = default;
  DenseBlockParams(std::size_t cin, std::size_t c)
      : w1(Shape{c, cin, 3, 3, 3}), b1(Shape{c}),
        w2(Shape{c, cin + c, 3, 3, 3}), b2(Shape{c}), has_proj(cin != c) {
    if (has_proj) {
      wp = Tensor<T>(Shape{c, cin, 1, 1, 1});
      bp = Tensor<T>(Shape{c});
    }
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w1", w1, InitKind::kFanInUniform, w1.dim(1) * 27});
    out.push_back({prefix + ".b1", b1, InitKind::kZeros, 0});
    out.push_back({prefix + ".w2", w2, InitKind::kFanInUniform, w2.dim(1) * 27});
    out.push_back({prefix + ".b2", b2, InitKind::kZeros, 0});
    if (has_proj) {
      out.push_back({prefix + ".wp", wp, InitKind::kFanInUniform, wp.dim(1)});
      out.push_back({prefix + ".bp", bp, InitKind::kZeros, 0});
    }
  }

  Tensor<T> forward(const Tensor<T>& x, T slope) const {
    Tensor<T> a1 = leaky_relu(conv3d(x, w1, b1, 1, 1), slope);
    Tensor<T> a2 = leaky_relu(conv3d(concat<T>({x, a1}, 1), w2, b2, 1, 1), slope);
    Tensor<T> shortcut = has_proj ? conv3d(x, wp, bp, 1, 0) : x;
    return add(a2, shortcut);
  }
};

// Decoder step: stride-2 transposed conv upsamples, the result is fused with
// the skip connection (and an attention feature when present) by a 1x1x1
// conv, then refined by a dense block.
template <typename T>
struct UpBlockParams {
  Tensor<T> wt, bt;  // [cin, cout, 2, 2, 2]
  Tensor<T> wf, bf;  // fuse 1x1x1: concat channels -> cout
  DenseBlockParams<T> body;

  UpBlockParams() = default;
  UpBlockParams(std::size_t cin, std::size_t skip_c, std::size_t extra_c, std::size_t cout)
      : wt(Shape{cin, cout, 2, 2, 2}), bt(Shape{cout}),
        wf(Shape{cout, cout + skip_c + extra_c, 1, 1, 1}), bf(Shape{cout}),
        body(cout, cout) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".wt", wt, InitKind::kFanInUniform, wt.dim(0) * 8});
    out.push_back({prefix + ".bt", bt, InitKind::kZeros, 0});
    out.push_back({prefix + ".wf", wf, InitKind::kFanInUniform, wf.dim(1)});
    out.push_back({prefix + ".bf", bf, InitKind::kZeros, 0});
    body.collect(out, prefix + ".body");
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& skip, const Tensor<T>* extra,
                    T slope) const {
    Tensor<T> up = leaky_relu(conv_transpose3d(x, wt, bt, 2, 0), slope);
    std::vector<Tensor<T>> parts{up, skip};
    if (extra) parts.push_back(*extra);
    Tensor<T> fused = leaky_relu(conv3d(concat(parts, 1), wf, bf, 1, 0), slope);
    return body.forward(fused, slope);
  }
};

template <typename T>
struct Conv1x1Params {
  Tensor<T> w, b;
  bool present = false;

  Conv1x1Params() = default;
  Conv1x1Params(std::size_t cin, std::size_t cout)
      : w(Shape{cout, cin, 1, 1, 1}), b(Shape{cout}), present(true) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    if (!present) return;
    out.push_back({prefix + ".w", w, InitKind::kFanInUniform, w.dim(1)});
    out.push_back({prefix + ".b", b, InitKind::kZeros, 0});
  }
};

template <typename T>
struct SstDUNetParams {
  ModelConfig cfg;
  SstEncoderParams<T> sst;
  Tensor<T> stem_w, stem_b;
  std::vector<DenseBlockParams<T>> down;
  DenseBlockParams<T> bridge;
  std::vector<UpBlockParams<T>> up;             // index = decoder level
  std::vector<Conv1x1Params<T>> sst_proj;       // index = decoder level; may be absent
  Tensor<T> head_w, head_b;

  SstDUNetParams() = default;
  explicit SstDUNetParams(const ModelConfig& cfg_) : cfg(cfg_) {
    cfg.validate();
    sst = SstEncoderParams<T>(cfg.encoder_config(), cfg.input);
    const auto& w = cfg.cnn_widths;
    const std::size_t L = w.size();
    stem_w = Tensor<T>(Shape{w[0], cfg.in_channels, 3, 3, 3});
    stem_b = Tensor<T>(Shape{w[0]});
    for (std::size_t i = 0; i < L; ++i)
      down.emplace_back(i == 0 ? w[0] : w[i - 1], w[i]);
    bridge = DenseBlockParams<T>(w[L - 1], cfg.bridge_channels);
    const std::size_t sst_scales = cfg.sst_stages + 1;
    sst_proj.resize(L);
    up.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
      // decoder level i emits features at 1/2^i; attention scale i matches
      const bool fuse_sst = i >= 1 && i <= sst_scales;
      if (fuse_sst)
        sst_proj[i] = Conv1x1Params<T>(cfg.sst_base_channels << (i - 1),
                                       cfg.sst_proj_channels);
      const std::size_t cin = (i + 1 == L) ? cfg.bridge_channels : w[i + 1];
      up[i] = UpBlockParams<T>(cin, w[i], fuse_sst ? cfg.sst_proj_channels : 0, w[i]);
    }
    head_w = Tensor<T>(Shape{1, w[0], 1, 1, 1});
    head_b = Tensor<T>(Shape{1});
  }

  ParamList<T> collect() {
    ParamList<T> out;
    sst.collect(out, "sst");
    out.push_back({"stem.w", stem_w, InitKind::kFanInUniform, cfg.in_channels * 27});
    out.push_back({"stem.b", stem_b, InitKind::kZeros, 0});
    for (std::size_t i = 0; i < down.size(); ++i)
      down[i].collect(out, "down" + std::to_string(i));
    bridge.collect(out, "bridge");
    for (std::size_t i = 0; i < up.size(); ++i) {
      sst_proj[i].collect(out, "sst_proj" + std::to_string(i));
      up[i].collect(out, "up" + std::to_string(i));
    }
    out.push_back({"head.w", head_w, InitKind::kFanInUniform, head_w.dim(1)});
    out.push_back({"head.b", head_b, InitKind::kZeros, 0});
    return out;
  }
};

template <typename T>
void init_weights(SstDUNetParams<T>& model, std::uint64_t seed) {
  auto params = model.collect();
  init_params(params, seed);
}

// Full forward pass: [B, in, D, H, W] -> sigmoid probabilities [B, 1, D, H, W].
template <typename T>
Tensor<T> model_forward(const Tensor<T>& x, const SstDUNetParams<T>& p) {
  const auto& cfg = p.cfg;
  if (x.ndim() != 5 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.input[0] ||
      x.dim(3) != cfg.input[1] || x.dim(4) != cfg.input[2])
    throw ShapeError("model_forward expects [B," + std::to_string(cfg.in_channels) + "," +
                     std::to_string(cfg.input[0]) + "," + std::to_string(cfg.input[1]) + "," +
                     std::to_string(cfg.input[2]) + "], got " + shape_str(x.shape()));
  const T slope = T(cfg.leaky_slope);
  auto feats = encoder_forward(x, p.sst);

  Tensor<T> cur = leaky_relu(conv3d(x, p.stem_w, p.stem_b, 1, 1), slope);
  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < p.down.size(); ++i) {
    if (i > 0) cur = maxpool3d(cur);
    cur = p.down[i].forward(cur, slope);
    skips.push_back(cur);
  }
  cur = p.bridge.forward(maxpool3d(cur), slope);

  for (std::size_t ii = p.up.size(); ii-- > 0;) {
    Tensor<T> proj;
    const Tensor<T>* extra = nullptr;
    if (p.sst_proj[ii].present) {
      proj = leaky_relu(conv3d(feats[ii - 1], p.sst_proj[ii].w, p.sst_proj[ii].b, 1, 0),
                        slope);
      extra = &proj;
    }
    cur = p.up[ii].forward(cur, skips[ii], extra, slope);
  }
  return sigmoid(conv3d(cur, p.head_w, p.head_b, 1, 0));
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'S', 'T', 'D', 'U', 'N', 'E', '1'};

template <typename U>
void write_pod(std::ostream& os, const U& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw CheckpointError("truncated checkpoint");
  return v;
}

}  // namespace detail

// Binary checkpoint: magic, format version, config JSON, then named raw
// little-endian tensors. Host is assumed little endian.
template <typename T>
void save_checkpoint(SstDUNetParams<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for write: " + path);
  os.write(detail::kCheckpointMagic, 8);
  detail::write_pod<std::uint32_t>(os, 1);
  const std::string cfg = nlohmann::json(model.cfg).dump();
  detail::write_pod<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), std::streamsize(cfg.size()));
  auto params = model.collect();
  detail::write_pod<std::uint64_t>(os, params.size());
  for (auto& p : params) {
    detail::write_pod<std::uint64_t>(os, p.name.size());
    os.write(p.name.data(), std::streamsize(p.name.size()));
    detail::write_pod<std::uint8_t>(os, sizeof(T) == 4 ? 'f' : 'd');
    detail::write_pod<std::uint32_t>(os, std::uint32_t(p.tensor.ndim()));
    for (std::size_t d = 0; d < p.tensor.ndim(); ++d)
      detail::write_pod<std::uint64_t>(os, p.tensor.dim(d));
    os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
             std::streamsize(p.tensor.size() * sizeof(T)));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

template <typename T>
SstDUNetParams<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw CheckpointError("bad magic: " + path);
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) throw CheckpointError("unsupported version " + std::to_string(version));
  const auto cfg_len = detail::read_pod<std::uint64_t>(is);
  std::string cfg_str(cfg_len, '\0');
  is.read(cfg_str.data(), std::streamsize(cfg_len));
  if (!is) throw CheckpointError("truncated checkpoint");
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(cfg_str).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad config block: ") + e.what());
  }
  SstDUNetParams<T> model(cfg);
  auto params = model.collect();
  const auto count = detail::read_pod<std::uint64_t>(is);
  if (count != params.size())
    throw CheckpointError("parameter count mismatch: file has " + std::to_string(count) +
                          ", model needs " + std::to_string(params.size()));
  for (auto& p : params) {
    const auto name_len = detail::read_pod<std::uint64_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    if (!is || name != p.name)
      throw CheckpointError("parameter order mismatch at " + p.name);
    const auto dtype = detail::read_pod<std::uint8_t>(is);
    if (dtype != (sizeof(T) == 4 ? 'f' : 'd'))
      throw CheckpointError("dtype mismatch at " + p.name);
    const auto ndim = detail::read_pod<std::uint32_t>(is);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::read_pod<std::uint64_t>(is);
    if (shape != p.tensor.shape())
      throw CheckpointError("shape mismatch at " + p.name + ": file " + shape_str(shape) +
                            " vs model " + shape_str(p.tensor.shape()));
    is.read(reinterpret_cast<char*>(p.tensor.data().data()),
            std::streamsize(p.tensor.size() * sizeof(T)));
    if (!is) throw CheckpointError("truncated tensor data at " + p.name);
    p.tensor.set_requires_grad(true);
  }
  return model;
}

}  // namespace sstdunet

#endif
