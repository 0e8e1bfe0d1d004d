// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "a2fpn/ops.hpp"
#include "a2fpn/tensor_io.hpp"

namespace a2fpn {

std::string_view to_string(Arch arch) {
  switch (arch) {
    case Arch::fpn: return "fpn";
    case Arch::pafpn: return "pafpn";
    case Arch::a2fpn: return "a2fpn";
    case Arch::a2fpn_lite: return "a2fpn_lite";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  if (name == "fpn") return Arch::fpn;
  if (name == "pafpn") return Arch::pafpn;
  if (name == "a2fpn") return Arch::a2fpn;
  if (name == "a2fpn_lite") return Arch::a2fpn_lite;
  throw std::invalid_argument("unknown architecture '" + std::string(name) +
                              "' (expected fpn, pafpn, a2fpn or a2fpn_lite)");
}

BackboneSpec parse_backbone_spec(std::string_view text) {
  if (text == "toy") return BackboneSpec::toy();
  if (text == "resnet50") return BackboneSpec::resnet50();
  BackboneSpec spec;
  std::stringstream ss{std::string(text)};
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 4) throw std::invalid_argument("backbone spec has more than four channel counts");
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v == 0) {
      throw std::invalid_argument("bad backbone channel '" + item + "'");
    }
    spec.channels[i++] = v;
  }
  if (i != 4) {
    throw std::invalid_argument("backbone spec needs four channel counts, 'toy' or 'resnet50'");
  }
  return spec;
}

std::vector<std::size_t> PyramidConfig::entity_counts() const {
  std::vector<std::size_t> n;
  for (std::size_t level = 2; level <= 5; ++level) n.push_back(a * (6 - level));
  return n;
}

void PyramidConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (c == 0 || c % 4 != 0) fail("c must be a positive multiple of 4");
  if (image_h == 0 || image_w == 0 || image_h % 64 != 0 || image_w % 64 != 0) {
    fail("image extents must be positive multiples of 64");
  }
  if (dtype != "f32" && dtype != "f64") fail("dtype must be f32 or f64");
  for (std::size_t ch : backbone.channels)
    if (ch == 0) fail("backbone channels must be positive");
  if (!is_a2()) return;
  if (a == 0) fail("entity coefficient a must be positive");
  if (k_up % 2 == 0 || k_dn % 2 == 0 || k_en % 2 == 0) fail("kernel sizes must be odd");
  if (c_mid == 0) fail("c_mid must be positive");
  if (!extra_conv && !pool_top) fail("without the extra conv the top level must be pooled");
  if (lambda_o < 0) fail("lambda_o must be non-negative");
}

PyramidConfig reference_config(Arch arch) {
  PyramidConfig cfg;
  cfg.arch = arch;
  if (arch == Arch::a2fpn_lite) {
    cfg.c = 128;
    cfg.a = 32;
    cfg.extra_conv = false;
    cfg.pool_top = true;
    cfg.smooth_finest = false;
  }
  return cfg;
}

PyramidConfig toy_config(Arch arch) {
  PyramidConfig cfg = reference_config(arch);
  cfg.c = arch == Arch::a2fpn_lite ? 8 : 16;
  cfg.a = arch == Arch::a2fpn_lite ? 1 : 2;
  cfg.c_mid = 8;
  cfg.image_h = cfg.image_w = 64;
  cfg.backbone.channels = {16, 16, 32, 32};
  cfg.seed = 7;
  return cfg;
}

nlohmann::json config_to_json(const PyramidConfig& cfg) {
  nlohmann::json j;
  j["arch"] = std::string(to_string(cfg.arch));
  j["c"] = cfg.c;
  j["a"] = cfg.a;
  j["k_up"] = cfg.k_up;
  j["k_dn"] = cfg.k_dn;
  j["k_en"] = cfg.k_en;
  j["c_mid"] = cfg.c_mid;
  j["gate_act"] = std::string(to_string(cfg.gate_act));
  j["concat_guidance"] = cfg.concat_guidance;
  j["pin_gates"] = cfg.pin_gates;
  j["extra_conv"] = cfg.extra_conv;
  j["pool_top"] = cfg.pool_top;
  j["smooth_finest"] = cfg.smooth_finest;
  j["seed"] = cfg.seed;
  j["dtype"] = cfg.dtype;
  j["image_size"] = {cfg.image_h, cfg.image_w};
  j["backbone"] = cfg.backbone.channels;
  j["lambda_o"] = cfg.lambda_o;
  return j;
}

PyramidConfig config_from_json(const nlohmann::json& j, const PyramidConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::vector<std::string> known = {
      "preset", "arch", "c", "a", "k_up", "k_dn", "k_en", "c_mid", "gate_act",
      "concat_guidance", "pin_gates", "extra_conv", "pool_top", "smooth_finest",
      "seed", "dtype", "image_size", "backbone", "lambda_o"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  PyramidConfig cfg = base;
  try {
    if (j.contains("arch")) cfg.arch = parse_arch(j.at("arch").get<std::string>());
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("c", cfg.c);
    take("a", cfg.a);
    take("k_up", cfg.k_up);
    take("k_dn", cfg.k_dn);
    take("k_en", cfg.k_en);
    take("c_mid", cfg.c_mid);
    if (j.contains("gate_act")) {
      cfg.gate_act = parse_gate_activation(j.at("gate_act").get<std::string>());
    }
    take("concat_guidance", cfg.concat_guidance);
    take("pin_gates", cfg.pin_gates);
    take("extra_conv", cfg.extra_conv);
    take("pool_top", cfg.pool_top);
    take("smooth_finest", cfg.smooth_finest);
    take("seed", cfg.seed);
    take("dtype", cfg.dtype);
    if (j.contains("image_size")) {
      const auto size = j.at("image_size").get<std::vector<std::size_t>>();
      if (size.size() != 2) throw std::invalid_argument("image_size must be [height, width]");
      cfg.image_h = size[0];
      cfg.image_w = size[1];
    }
    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      cfg.backbone = b.is_string() ? parse_backbone_spec(b.get<std::string>())
                                   : BackboneSpec{b.get<std::array<std::size_t, 4>>()};
    }
    take("lambda_o", cfg.lambda_o);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PyramidConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("cannot parse config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  const Arch arch = parse_arch(j.value("arch", std::string("a2fpn")));
  const std::string preset = j.value("preset", std::string("reference"));
  PyramidConfig base;
  if (preset == "reference") {
    base = reference_config(arch);
  } else if (preset == "toy") {
    base = toy_config(arch);
  } else {
    throw std::invalid_argument("unknown preset '" + preset + "' (expected reference or toy)");
  }
  return config_from_json(j, base);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

template <typename T>
BackboneParams<T> init_backbone(const BackboneSpec& spec, Rng& rng) {
  const double relu_gain = std::sqrt(2.0);
  const auto& ch = spec.channels;
  BackboneParams<T> p;
  p.stem1 = make_conv<T>(3, ch[0], 3, 2, true, rng, relu_gain);
  p.stem2 = make_conv<T>(ch[0], ch[0], 3, 2, true, rng, relu_gain);
  for (std::size_t i = 0; i < 3; ++i)
    p.stages[i] = make_conv<T>(ch[i], ch[i + 1], 3, 2, true, rng, relu_gain);
  return p;
}

template <typename T>
NeckParams<T> init_neck(const PyramidConfig& cfg, Rng& rng) {
  cfg.validate();
  NeckParams<T> n;
  const std::size_t c = cfg.c;
  const auto& ch = cfg.backbone.channels;
  if (!cfg.is_a2()) {
    for (std::size_t i = 0; i < 4; ++i) n.lateral.push_back(make_conv<T>(ch[i], c, 1, 1, true, rng));
    for (std::size_t i = 0; i < 4; ++i) n.smooth.push_back(make_conv<T>(c, c, 3, 1, true, rng));
    if (cfg.arch == Arch::pafpn) {
      for (std::size_t i = 0; i < 3; ++i) n.down.push_back(make_conv<T>(c, c, 3, 2, true, rng));
      for (std::size_t i = 0; i < 3; ++i) n.post.push_back(make_conv<T>(c, c, 3, 1, true, rng));
    }
    return n;
  }
  if (cfg.extra_conv) n.extra = make_conv<T>(ch[3], c, 3, 2, true, rng);

  MgcShape shape;
  shape.width = c;
  shape.in_channels.assign(ch.begin(), ch.end());
  if (cfg.extra_conv) shape.in_channels.push_back(c);
  shape.entity_counts = cfg.entity_counts();
  shape.ortho_weight = cfg.lambda_o;
  n.mgc = init_mgc<T>(shape, rng);

  FusionSpec up{c, cfg.c_mid, cfg.k_en, cfg.k_up, 2, Direction::up, cfg.concat_guidance,
                !cfg.pin_gates};
  FusionSpec down = up;
  down.kernel_size = cfg.k_dn;
  down.direction = Direction::down;
  for (std::size_t level = 2; level < cfg.top_level(); ++level)
    n.topdown.push_back(init_fusion<T>(up, rng));
  if (cfg.smooth_finest) n.finest = make_conv<T>(c, c, 3, 1, true, rng);
  for (std::size_t level = 3; level <= cfg.top_fused_level(); ++level)
    n.bottomup.push_back(init_fusion<T>(down, rng));
  return n;
}

template <typename T>
ModelParams<T> init_model(const PyramidConfig& cfg) {
  Rng rng(cfg.seed);
  ModelParams<T> m;
  m.backbone = init_backbone<T>(cfg.backbone, rng);
  m.neck = init_neck<T>(cfg, rng);
  m.head = make_conv<T>(cfg.c, 1, 1, 1, true, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(const ModelParams<T>& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  visit_model(m, [&](const std::string& name, const Tensor<T>& t) {
    const std::string file = name + ".a2tsr";
    write_a2tsr(dir / file, t);
    entries.push_back({{"name", name}, {"file", file}, {"shape", t.shape()}});
  });
  nlohmann::json manifest{{"dtype", std::is_same_v<T, float> ? "f32" : "f64"},
                          {"tensors", entries}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

template <typename T>
void load_checkpoint(ModelParams<T>& m, const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  std::map<std::string, std::string> files;
  for (const auto& e : manifest.at("tensors"))
    files[e.at("name").get<std::string>()] = e.at("file").get<std::string>();
  visit_model(m, [&](const std::string& name, Tensor<T>& t) {
    auto it = files.find(name);
    if (it == files.end()) throw FormatError("checkpoint lacks " + name);
    Tensor<T> loaded = load_tensor<T>(dir / it->second);
    if (loaded.shape() != t.shape()) {
      throw FormatError("checkpoint shape mismatch for " + name + ": " +
                        shape_to_string(loaded.shape()) + " vs " + shape_to_string(t.shape()));
    }
    t = std::move(loaded);
  });
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

template <typename T>
BackboneTrace<T> toy_backbone_forward_traced(const Tensor<T>& image,
                                             const BackboneParams<T>& p) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("backbone expects a 3 x H x W image, got " +
                         shape_to_string(image.shape()));
  }
  if (image.dim(1) % 64 != 0 || image.dim(2) % 64 != 0) {
    throw DimensionError("image extents " + shape_to_string(image.shape()) +
                         " must be divisible by 64");
  }
  const ConvParams<T>* convs[] = {&p.stem1, &p.stem2, &p.stages[0], &p.stages[1],
                                  &p.stages[2]};
  BackboneTrace<T> tr;
  Tensor<T> x = image;
  for (std::size_t j = 0; j < 5; ++j) {
    tr.inputs.push_back(x);
    tr.pre.push_back(conv2d(*convs[j], x));
    x = relu(tr.pre.back());
    if (j >= 1) tr.levels.push_back({j + 1, std::size_t{1} << (j + 1), x});
  }
  return tr;
}

template <typename T>
Tensor<T> toy_backbone_backward(const BackboneTrace<T>& tr, const BackboneParams<T>& p,
                                const std::vector<Tensor<T>>& dlevels,
                                BackboneParams<T>& grad) {
  const ConvParams<T>* convs[] = {&p.stem1, &p.stem2, &p.stages[0], &p.stages[1],
                                  &p.stages[2]};
  ConvParams<T>* gconvs[] = {&grad.stem1, &grad.stem2, &grad.stages[0], &grad.stages[1],
                             &grad.stages[2]};
  Tensor<T> carry;
  for (std::size_t jj = 5; jj-- > 0;) {
    Tensor<T> dact(tr.pre[jj].shape());
    if (jj >= 1 && jj - 1 < dlevels.size() && !dlevels[jj - 1].empty()) dact += dlevels[jj - 1];
    if (!carry.empty()) dact += carry;
    carry = conv2d_backward(*convs[jj], tr.inputs[jj], relu_backward(tr.pre[jj], dact),
                            *gconvs[jj]);
  }
  return carry;
}

template <typename T>
LevelFeature<T> make_extra_level(const LevelFeature<T>& f5, const ConvParams<T>& p) {
  if (p.stride != 2) throw std::invalid_argument("extra level conv must have stride 2");
  return {f5.level + 1, f5.stride * 2, conv2d(p, f5.data)};
}

// ---------------------------------------------------------------------------
// Necks
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_levels(const std::vector<LevelFeature<T>>& levels, const PyramidConfig& cfg) {
  if (levels.size() != 4) {
    throw DimensionError("neck expects backbone levels 2..5, got " +
                         std::to_string(levels.size()) + " levels");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& f = levels[i].data;
    if (f.rank() != 3 || f.dim(0) != cfg.backbone.channels[i]) {
      throw DimensionError("level " + std::to_string(i + 2) + " has shape " +
                           shape_to_string(f.shape()) + ", expected " +
                           std::to_string(cfg.backbone.channels[i]) + " channels");
    }
    if (i > 0 && (levels[i - 1].data.dim(1) != 2 * f.dim(1) ||
                  levels[i - 1].data.dim(2) != 2 * f.dim(2))) {
      throw DimensionError("levels " + std::to_string(i + 1) + " and " +
                           std::to_string(i + 2) + " are not a factor 2 apart");
    }
  }
  if (levels[3].data.dim(1) % 2 != 0 || levels[3].data.dim(2) % 2 != 0) {
    throw DimensionError("level 5 extents must be even to form level 6");
  }
}

template <typename T>
void fpn_forward(NeckTrace<T>& tr, const NeckParams<T>& p, const PyramidConfig& cfg) {
  std::vector<Tensor<T>> merged(4);
  merged[3] = conv2d(p.lateral[3], tr.inputs[3]);
  for (std::size_t i = 3; i-- > 0;)
    merged[i] = add(conv2d(p.lateral[i], tr.inputs[i]), nearest_upsample(merged[i + 1], 2));
  for (std::size_t i = 0; i < 4; ++i) tr.smoothed.push_back(conv2d(p.smooth[i], merged[i]));
  tr.merged = std::move(merged);

  std::vector<Tensor<T>> outs;
  if (cfg.arch == Arch::pafpn) {
    const Tensor<T>* prev = &tr.smoothed[0];
    for (std::size_t i = 0; i < 3; ++i) {
      tr.bu.push_back(add(tr.smoothed[i + 1], conv2d(p.down[i], *prev)));
      prev = &tr.bu.back();
    }
    for (std::size_t i = 0; i < 3; ++i) tr.post_out.push_back(conv2d(p.post[i], tr.bu[i]));
    outs = {tr.smoothed[0], tr.post_out[0], tr.post_out[1], tr.post_out[2]};
  } else {
    outs = tr.smoothed;
  }
  tr.pool_input_shape = outs[3].shape();
  auto pooled = max_pool2d(outs[3]);
  tr.pool_argmax = std::move(pooled.argmax);
  outs.push_back(std::move(pooled.out));
  for (std::size_t i = 0; i < 5; ++i)
    tr.outputs.push_back({i + 2, std::size_t{4} << i, std::move(outs[i])});
}

template <typename T>
void a2fpn_forward(NeckTrace<T>& tr, const NeckParams<T>& p, const PyramidConfig& cfg) {
  std::vector<Tensor<T>> features = tr.inputs;
  if (cfg.extra_conv) {
    tr.extra_input = tr.inputs[3];
    features.push_back(conv2d(p.extra, tr.extra_input));
  }
  tr.mgc = mgc_forward_traced(features, p.mgc);
  const FusionOptions opt = cfg.fusion_options();
  const std::size_t top = cfg.top_level();

  // td[level - 2]
  std::vector<const Tensor<T>*> td(top - 1, nullptr);
  td[top - 2] = &tr.mgc.distribute[top - 2].output;
  tr.topdown.resize(top - 2);
  for (std::size_t level = top - 1; level >= 2; --level) {
    tr.topdown[level - 2] = fuse_topdown_forward(*td[level - 1],
                                                 tr.mgc.distribute[level - 2].output,
                                                 p.topdown[level - 2], opt);
    td[level - 2] = &tr.topdown[level - 2].output;
  }

  std::vector<Tensor<T>> outs;
  tr.finest_input = *td[0];
  outs.push_back(cfg.smooth_finest ? conv2d(p.finest, tr.finest_input) : tr.finest_input);
  for (std::size_t level = 3; level <= cfg.top_fused_level(); ++level) {
    tr.bottomup.push_back(
        fuse_bottomup_forward(outs.back(), *td[level - 2], p.bottomup[level - 3], opt));
    outs.push_back(tr.bottomup.back().output);
  }
  if (cfg.pool_top) {
    tr.pool_input_shape = outs.back().shape();
    auto pooled = max_pool2d(outs.back());
    tr.pool_argmax = std::move(pooled.argmax);
    outs.push_back(std::move(pooled.out));
  }
  for (std::size_t i = 0; i < 5; ++i)
    tr.outputs.push_back({i + 2, std::size_t{4} << i, std::move(outs[i])});
}

template <typename T>
std::vector<Tensor<T>> fpn_backward(const NeckTrace<T>& tr, const NeckParams<T>& p,
                                    const PyramidConfig& cfg, std::vector<Tensor<T>> d,
                                    NeckParams<T>& grad) {
  d[3] += max_pool2d_backward(tr.pool_input_shape, tr.pool_argmax, d[4]);
  std::vector<Tensor<T>> dsmoothed(4);
  if (cfg.arch == Arch::pafpn) {
    Tensor<T> carry;  // gradient reaching bu[i] from the level above
    for (std::size_t i = 3; i-- > 0;) {
      Tensor<T> dbu = conv2d_backward(p.post[i], tr.bu[i], d[i + 1], grad.post[i]);
      if (!carry.empty()) dbu += carry;
      dsmoothed[i + 1] = dbu;
      const Tensor<T>& below = i == 0 ? tr.smoothed[0] : tr.bu[i - 1];
      carry = conv2d_backward(p.down[i], below, dbu, grad.down[i]);
    }
    dsmoothed[0] = add(d[0], carry);
  } else {
    for (std::size_t i = 0; i < 4; ++i) dsmoothed[i] = d[i];
  }
  std::vector<Tensor<T>> dinputs(4);
  Tensor<T> carry;
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor<T> dmerged = conv2d_backward(p.smooth[i], tr.merged[i], dsmoothed[i], grad.smooth[i]);
    if (!carry.empty()) dmerged += carry;
    dinputs[i] = conv2d_backward(p.lateral[i], tr.inputs[i], dmerged, grad.lateral[i]);
    if (i < 3) carry = nearest_upsample_backward(tr.merged[i + 1].shape(), dmerged, 2);
  }
  return dinputs;
}

template <typename T>
std::vector<Tensor<T>> a2fpn_backward(const NeckTrace<T>& tr, const NeckParams<T>& p,
                                      const PyramidConfig& cfg, std::vector<Tensor<T>> dbu,
                                      NeckParams<T>& grad) {
  const FusionOptions opt = cfg.fusion_options();
  const std::size_t top = cfg.top_level();
  if (cfg.pool_top) dbu[3] += max_pool2d_backward(tr.pool_input_shape, tr.pool_argmax, dbu[4]);

  std::vector<Tensor<T>> dtd(top - 1);  // index level - 2
  for (std::size_t level = 2; level <= top; ++level)
    dtd[level - 2] = Tensor<T>(tr.mgc.distribute[level - 2].output.shape());
  for (std::size_t level = cfg.top_fused_level(); level >= 3; --level) {
    auto g = fuse_bottomup_backward(tr.bottomup[level - 3], p.bottomup[level - 3], opt,
                                    dbu[level - 2], grad.bottomup[level - 3]);
    dbu[level - 3] += g.dprimary;
    dtd[level - 2] += g.dpartner;
  }
  if (cfg.smooth_finest) {
    dtd[0] += conv2d_backward(p.finest, tr.finest_input, dbu[0], grad.finest);
  } else {
    dtd[0] += dbu[0];
  }

  std::vector<Tensor<T>> dlc(top - 1);
  for (std::size_t level = 2; level < top; ++level) {
    auto g = fuse_topdown_backward(tr.topdown[level - 2], p.topdown[level - 2], opt,
                                   dtd[level - 2], grad.topdown[level - 2]);
    dtd[level - 1] += g.dprimary;
    dlc[level - 2] = std::move(g.dpartner);
  }
  dlc[top - 2] = std::move(dtd[top - 2]);

  std::vector<Tensor<T>> dfeatures = mgc_backward(tr.mgc, p.mgc, dlc, grad.mgc);
  if (cfg.extra_conv) {
    dfeatures[3] += conv2d_backward(p.extra, tr.extra_input, dfeatures[4], grad.extra);
  }
  dfeatures.resize(4);
  return dfeatures;
}

}  // namespace

template <typename T>
NeckTrace<T> neck_forward_traced(const std::vector<LevelFeature<T>>& levels,
                                 const NeckParams<T>& p, const PyramidConfig& cfg) {
  cfg.validate();
  check_levels(levels, cfg);
  NeckTrace<T> tr;
  for (const auto& l : levels) tr.inputs.push_back(l.data);
  if (cfg.is_a2()) {
    a2fpn_forward(tr, p, cfg);
  } else {
    fpn_forward(tr, p, cfg);
  }
  return tr;
}

template <typename T>
std::vector<LevelFeature<T>> forward_fpn(const std::vector<LevelFeature<T>>& levels,
                                         const NeckParams<T>& p, const PyramidConfig& cfg) {
  PyramidConfig c = cfg;
  c.arch = Arch::fpn;
  return neck_forward_traced(levels, p, c).outputs;
}

template <typename T>
std::vector<LevelFeature<T>> forward_pafpn(const std::vector<LevelFeature<T>>& levels,
                                           const NeckParams<T>& p, const PyramidConfig& cfg) {
  PyramidConfig c = cfg;
  c.arch = Arch::pafpn;
  return neck_forward_traced(levels, p, c).outputs;
}

template <typename T>
std::vector<LevelFeature<T>> forward_a2fpn(const std::vector<LevelFeature<T>>& levels,
                                           const NeckParams<T>& p, const PyramidConfig& cfg) {
  if (!cfg.is_a2()) throw std::invalid_argument("forward_a2fpn: config is not an a2fpn variant");
  return neck_forward_traced(levels, p, cfg).outputs;
}

template <typename T>
std::vector<Tensor<T>> neck_backward(const NeckTrace<T>& tr, const NeckParams<T>& p,
                                     const PyramidConfig& cfg,
                                     const std::vector<Tensor<T>>& doutputs,
                                     NeckParams<T>& grad) {
  if (doutputs.size() != tr.outputs.size()) {
    throw DimensionError("neck_backward: expected " + std::to_string(tr.outputs.size()) +
                         " output gradients");
  }
  std::vector<Tensor<T>> d;
  for (std::size_t i = 0; i < doutputs.size(); ++i) {
    d.push_back(doutputs[i].empty() ? Tensor<T>(tr.outputs[i].data.shape()) : doutputs[i]);
  }
  return cfg.is_a2() ? a2fpn_backward(tr, p, cfg, std::move(d), grad)
                     : fpn_backward(tr, p, cfg, std::move(d), grad);
}

template <typename T>
std::vector<LevelFeature<T>> forward_pyramid(const Tensor<T>& image, const ModelParams<T>& m,
                                             const PyramidConfig& cfg) {
  return neck_forward_traced(toy_backbone_forward(image, m.backbone), m.neck, cfg).outputs;
}

// ---------------------------------------------------------------------------
// Fusion graph
// ---------------------------------------------------------------------------

std::vector<GraphEdge> fusion_graph(const PyramidConfig& cfg) {
  cfg.validate();
  std::vector<GraphEdge> edges;
  auto node = [](const char* kind, std::size_t level) {
    return std::string(kind) + std::to_string(level);
  };
  auto edge = [&](std::string from, std::string to, const char* kind) {
    edges.push_back({std::move(from), std::move(to), kind});
  };

  const bool a2 = cfg.is_a2();
  const std::size_t top = a2 ? cfg.top_level() : 5;
  if (a2 && cfg.extra_conv) edge(node("in", 5), node("in", 6), "extra");
  for (std::size_t level = 2; level <= top; ++level) edge(node("in", level), node("lat", level), "project");
  edge(node("lat", top), node("td", top), "identity");
  for (std::size_t level = top - 1; level >= 2; --level) {
    edge(node("td", level + 1), node("td", level), "upsample");
    edge(node("lat", level), node("td", level), "merge");
    if (a2 && cfg.concat_guidance) edge(node("lat", level), node("td", level), "guide");
    if (a2 && !cfg.pin_gates) edge(node("lat", level), node("td", level), "gate");
  }

  if (cfg.arch == Arch::fpn) {
    for (std::size_t level = 2; level <= 5; ++level) edge(node("td", level), node("out", level), "identity");
    edge(node("td", 5), node("out", 6), "pool");
  } else {
    const std::size_t fused_top = a2 ? cfg.top_fused_level() : 5;
    edge(node("td", 2), node("bu", 2), "identity");
    for (std::size_t level = 3; level <= fused_top; ++level) {
      edge(node("bu", level - 1), node("bu", level), "downsample");
      edge(node("td", level), node("bu", level), "merge");
      if (a2 && cfg.concat_guidance) edge(node("td", level), node("bu", level), "guide");
      if (a2 && !cfg.pin_gates) edge(node("bu", level - 1), node("bu", level), "gate");
    }
    for (std::size_t level = 2; level <= fused_top; ++level) edge(node("bu", level), node("out", level), "identity");
    if (fused_top == 5) edge(node("bu", 5), node("out", 6), "pool");
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

#define A2FPN_INSTANTIATE_PYRAMID(T)                                                       \
  template BackboneParams<T> init_backbone(const BackboneSpec&, Rng&);                     \
  template NeckParams<T> init_neck(const PyramidConfig&, Rng&);                            \
  template ModelParams<T> init_model(const PyramidConfig&);                                \
  template void save_checkpoint(const ModelParams<T>&, const std::filesystem::path&);      \
  template void load_checkpoint(ModelParams<T>&, const std::filesystem::path&);            \
  template BackboneTrace<T> toy_backbone_forward_traced(const Tensor<T>&,                  \
                                                        const BackboneParams<T>&);         \
  template Tensor<T> toy_backbone_backward(const BackboneTrace<T>&, const BackboneParams<T>&, \
                                           const std::vector<Tensor<T>>&,                  \
                                           BackboneParams<T>&);                            \
  template LevelFeature<T> make_extra_level(const LevelFeature<T>&, const ConvParams<T>&); \
  template NeckTrace<T> neck_forward_traced(const std::vector<LevelFeature<T>>&,           \
                                            const NeckParams<T>&, const PyramidConfig&);   \
  template std::vector<LevelFeature<T>> forward_fpn(const std::vector<LevelFeature<T>>&,   \
                                                    const NeckParams<T>&,                  \
                                                    const PyramidConfig&);                 \
  template std::vector<LevelFeature<T>> forward_pafpn(const std::vector<LevelFeature<T>>&, \
                                                      const NeckParams<T>&,                \
                                                      const PyramidConfig&);               \
  template std::vector<LevelFeature<T>> forward_a2fpn(const std::vector<LevelFeature<T>>&, \
                                                      const NeckParams<T>&,                \
                                                      const PyramidConfig&);               \
  template std::vector<Tensor<T>> neck_backward(const NeckTrace<T>&, const NeckParams<T>&, \
                                                const PyramidConfig&,                      \
                                                const std::vector<Tensor<T>>&,             \
                                                NeckParams<T>&);                           \
  template std::vector<LevelFeature<T>> forward_pyramid(const Tensor<T>&,                  \
                                                        const ModelParams<T>&,             \
                                                        const PyramidConfig&);

A2FPN_INSTANTIATE_PYRAMID(float)
A2FPN_INSTANTIATE_PYRAMID(double)

#undef A2FPN_INSTANTIATE_PYRAMID

}  // namespace a2fpn
