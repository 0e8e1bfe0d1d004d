// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace a2fpn {

std::uint64_t conv_param_count(std::size_t in_ch, std::size_t out_ch, std::size_t k, bool bias) {
  return std::uint64_t{out_ch} * in_ch * k * k + (bias ? out_ch : 0);
}

std::uint64_t conv_flop_count(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                              std::size_t h_out, std::size_t w_out) {
  return std::uint64_t{out_ch} * in_ch * k * k * h_out * w_out;
}

void ComplexityReport::add(std::string name, std::uint64_t p, std::uint64_t f) {
  params += p;
  flops += f;
  lines.push_back({std::move(name), p, f});
}

const ComplexityLine* ComplexityReport::find(const std::string& name) const {
  for (const auto& l : lines)
    if (l.name == name) return &l;
  return nullptr;
}

namespace {

using u64 = std::uint64_t;

struct Extent {
  u64 h = 0;
  u64 w = 0;
  u64 area() const { return h * w; }
};

// Builds lines for one architecture. With `flops` unset every FLOP entry is 0.
class Counter {
 public:
  Counter(const PyramidConfig& cfg, bool flops, ComplexityReport& out)
      : cfg_(cfg), flops_(flops), out_(out) {}

  Extent level(std::size_t i) const {
    return {cfg_.image_h >> i, cfg_.image_w >> i};
  }

  void conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
            Extent at_output) {
    line(name, conv_param_count(in, out, k, true), conv_flop_count(in, out, k, at_output.h, at_output.w));
  }

  void line(const std::string& name, u64 params, u64 flops) {
    out_.add(name, params, flops_ ? flops : 0);
  }

  void count() {
    if (cfg_.is_a2()) {
      a2fpn();
    } else {
      fpn();
    }
  }

 private:
  void fpn() {
    const u64 c = cfg_.c;
    const auto& ch = cfg_.backbone.channels;
    for (std::size_t i = 0; i < 4; ++i)
      conv("fpn.lateral.l" + std::to_string(i + 2), ch[i], c, 1, level(i + 2));
    for (std::size_t i = 0; i < 3; ++i)
      line("fpn.merge.l" + std::to_string(i + 2), 0, c * level(i + 2).area());
    for (std::size_t i = 0; i < 4; ++i)
      conv("fpn.smooth.l" + std::to_string(i + 2), c, c, 3, level(i + 2));
    if (cfg_.arch == Arch::pafpn) {
      for (std::size_t i = 0; i < 3; ++i)
        conv("pafpn.down.l" + std::to_string(i + 3), c, c, 3, level(i + 3));
      for (std::size_t i = 0; i < 3; ++i)
        line("pafpn.merge.l" + std::to_string(i + 3), 0, c * level(i + 3).area());
      for (std::size_t i = 0; i < 3; ++i)
        conv("pafpn.post.l" + std::to_string(i + 3), c, c, 3, level(i + 3));
    }
    line("pool.l6", 0, c * level(5).area());
  }

  // Scaled cosine attention of an (nq x d) query block against d x nk keys.
  static u64 compat_flops(u64 nq, u64 d, u64 nk) {
    return d * nk          // key normalization
           + nq * d * nk   // scores
           + nq * nk       // scaling
           + 3 * nq * nk;  // softmax
  }

  static u64 gcn_flops(u64 c, u64 n) {
    const u64 q = c / 4;
    return 2 * q * c * n + compat_flops(n, q, n) + c * c * n + c * n * n + c * n;
  }

  static u64 gcn_params(u64 c) { return 2 * (c / 4) * c + c * c; }

  void a2fpn() {
    const u64 c = cfg_.c;
    const auto& ch = cfg_.backbone.channels;
    const std::size_t top = cfg_.top_level();
    if (cfg_.extra_conv) conv("extra.l6", ch[3], c, 3, level(6));

    std::vector<u64> in_ch(ch.begin(), ch.end());
    if (cfg_.extra_conv) in_ch.push_back(c);
    const auto counts = cfg_.entity_counts();
    u64 total_entities = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      const u64 n = counts[j], ci = in_ch[j], hw = level(j + 2).area();
      const std::string p = "mgc.l" + std::to_string(j + 2);
      line(p + ".collect", n * ci + c * ci, compat_flops(n, ci, hw) + ci * hw * n + c * ci * n);
      line(p + ".gcn", gcn_params(c), gcn_flops(c, n));
      total_entities += n;
    }
    const u64 n_all = total_entities;
    line("mgc.shared", gcn_params(c), gcn_flops(c, n_all));
    line("mgc.out", c * c, 0);
    for (std::size_t j = 0; j < in_ch.size(); ++j) {
      const u64 ci = in_ch[j], hw = level(j + 2).area();
      const u64 flops = c * ci * hw                 // queries
                        + compat_flops(hw, c, n_all)  // attention over the fused bank
                        + c * c * n_all               // output projection of the bank
                        + c * n_all * hw              // weighted sum
                        + c * ci * hw                 // residual projection
                        + c * hw;                     // residual add
      line("mgc.l" + std::to_string(j + 2) + ".distribute", 2 * c * ci, flops);
    }

    for (std::size_t lvl = 2; lvl < top; ++lvl)
      fusion("td.l" + std::to_string(lvl), Direction::up, level(lvl), level(lvl + 1));
    if (cfg_.smooth_finest) conv("bu.l2.smooth", c, c, 3, level(2));
    for (std::size_t lvl = 3; lvl <= cfg_.top_fused_level(); ++lvl)
      fusion("bu.l" + std::to_string(lvl), Direction::down, level(lvl - 1), level(lvl));
    if (cfg_.pool_top) line("pool.l6", 0, c * level(5).area());
  }

  // `fine` and `coarse` are the two resolutions of the site; the output is
  // at `fine` for top-down and at `coarse` for bottom-up sites.
  void fusion(const std::string& p, Direction dir, Extent fine, Extent coarse) {
    const bool up = dir == Direction::up;
    const u64 c = cfg_.c, mid = cfg_.c_mid, ken = cfg_.k_en;
    const u64 k = up ? cfg_.k_up : cfg_.k_dn;
    const u64 k2 = k * k;
    const u64 guide = cfg_.concat_guidance ? 2 * c : c;
    const Extent guide_at = up ? coarse : fine;
    const Extent out = up ? fine : coarse;

    // Partner resampled to the guide resolution: max pool (1 per input) or
    // bilinear (1 per output), both c * fine.area().
    line(p + ".resize", 0, c * fine.area());
    conv(p + ".kpred.compressor", guide, mid, 1, guide_at);
    line(p + ".kpred.encoder", conv_param_count(mid, mid, 3, true),
         conv_flop_count(mid, mid, 3, guide_at.h, guide_at.w) + mid * guide_at.area());
    const u64 pred_out = up ? 4 * k2 : k2;
    line(p + ".kpred.predictor", conv_param_count(mid, pred_out, ken, true),
         conv_flop_count(mid, pred_out, ken, coarse.h, coarse.w) + 3 * k2 * out.area());
    line(p + ".reassemble", 0, c * k2 * out.area());
    if (!cfg_.pin_gates) {
      const u64 hw = coarse.area();
      const u64 gate_hw = up ? coarse.area() : fine.area();
      const u64 half = c / 2;
      const u64 params = 2 * c + 2 * half * 2 * c + 2 * half;
      const u64 flops = 2 * c * gate_hw       // mask logits
                        + 3 * gate_hw         // mask softmax
                        + 2 * c * gate_hw     // attention pooling
                        + half * 2 * c        // squeeze
                        + half + half         // layer norm, ReLU
                        + 2 * c * half        // excite
                        + 2 * c               // activation
                        + 2 * c * (up ? fine.area() : hw);  // channel scaling
      line(p + ".gate", params, flops);
    }
    line(p + ".merge", 0, c * out.area());
    conv(p + ".smooth", c, c, 3, out);
  }

  const PyramidConfig& cfg_;
  bool flops_;
  ComplexityReport& out_;
};

PyramidConfig resolved(Arch arch, const BackboneSpec& backbone, const PyramidConfig& cfg) {
  PyramidConfig c = cfg;
  c.arch = arch;
  c.backbone = backbone;
  return c;
}

ComplexityReport build(const PyramidConfig& cfg, bool flops) {
  ComplexityReport r;
  r.arch = std::string(to_string(cfg.arch));
  if (cfg.c == 0) return r;
  cfg.validate();
  Counter(cfg, flops, r).count();
  return r;
}

std::string group_of(const std::string& name) {
  if (name.rfind("mgc.", 0) == 0) return "mgc";
  return name.substr(0, name.find('.'));
}

std::string with_unit(double v, double unit, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%s", v / unit, suffix);
  return buf;
}

std::string image_label(std::size_t w, std::size_t h) {
  return w == 0 ? "-" : std::to_string(w) + " x " + std::to_string(h);
}

// Left-aligned first column, right-aligned others.
std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string pad(width[i] - r[i].size(), ' ');
      if (i > 0) os << "  ";
      os << (i == 0 ? r[i] + pad : pad + r[i]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

ComplexityReport count_params(Arch arch, const BackboneSpec& backbone, const PyramidConfig& cfg) {
  return build(resolved(arch, backbone, cfg), false);
}

ComplexityReport count_flops(Arch arch, const BackboneSpec& backbone, std::size_t image_w,
                             std::size_t image_h, const PyramidConfig& cfg) {
  if (image_w == 0 || image_h == 0 || image_w % 64 != 0 || image_h % 64 != 0) {
    throw DimensionError("image size " + std::to_string(image_w) + "x" + std::to_string(image_h) +
                         " must be positive multiples of 64");
  }
  PyramidConfig c = resolved(arch, backbone, cfg);
  c.image_w = image_w;
  c.image_h = image_h;
  ComplexityReport r = build(c, true);
  r.image_w = image_w;
  r.image_h = image_h;
  return r;
}

DeltaReport diff_report(const ComplexityReport& a, const ComplexityReport& b) {
  if (a.image_w != b.image_w || a.image_h != b.image_h) {
    throw std::invalid_argument("diff_report: image size " + image_label(a.image_w, a.image_h) +
                                " vs " + image_label(b.image_w, b.image_h));
  }
  DeltaReport d;
  d.from = b.arch;
  d.to = a.arch;
  d.image_w = a.image_w;
  d.image_h = a.image_h;
  std::map<std::string, DeltaLine> merged;
  for (const auto& l : a.lines) {
    auto& m = merged[l.name];
    m.params += static_cast<std::int64_t>(l.params);
    m.flops += static_cast<std::int64_t>(l.flops);
  }
  for (const auto& l : b.lines) {
    auto& m = merged[l.name];
    m.params -= static_cast<std::int64_t>(l.params);
    m.flops -= static_cast<std::int64_t>(l.flops);
  }
  for (auto& [name, line] : merged) {
    line.name = name;
    d.params += line.params;
    d.flops += line.flops;
    d.lines.push_back(line);
  }
  return d;
}

ReferenceComparison compare_with_reference(const PyramidConfig& cfg,
                                           const ReferenceDelta& reference) {
  const BackboneSpec backbone = BackboneSpec::resnet50();
  ReferenceComparison c;
  c.reference = reference;
  c.delta = diff_report(count_flops(Arch::a2fpn, backbone, 1280, 832, cfg),
                        count_flops(Arch::pafpn, backbone, 1280, 832, cfg));
  std::map<std::string, DeltaLine> groups;
  for (const auto& l : c.delta.lines) {
    auto& g = groups[group_of(l.name)];
    g.params += l.params;
    g.flops += l.flops;
  }
  for (auto& [name, g] : groups) {
    g.name = name;
    c.components.push_back(g);
  }
  c.params_rel = (static_cast<double>(c.delta.params) - reference.params) / reference.params;
  c.flops_rel = (static_cast<double>(c.delta.flops) - reference.flops) / reference.flops;
  c.params_within = std::abs(c.params_rel) <= reference.tolerance;
  c.flops_within = std::abs(c.flops_rel) <= reference.tolerance;
  return c;
}

nlohmann::json to_json(const ComplexityReport& r) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : r.lines) lines.push_back({{"name", l.name}, {"params", l.params}, {"flops", l.flops}});
  nlohmann::json j{{"arch", r.arch}, {"params", r.params}, {"flops", r.flops}, {"lines", lines}};
  if (r.image_w != 0) j["image_size"] = {r.image_w, r.image_h};
  return j;
}

nlohmann::json to_json(const DeltaReport& d) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : d.lines) lines.push_back({{"name", l.name}, {"params", l.params}, {"flops", l.flops}});
  nlohmann::json j{{"from", d.from}, {"to", d.to}, {"params", d.params}, {"flops", d.flops},
                   {"lines", lines}};
  if (d.image_w != 0) j["image_size"] = {d.image_w, d.image_h};
  return j;
}

nlohmann::json to_json(const ReferenceComparison& c) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& g : c.components) comps.push_back({{"component", g.name}, {"params", g.params}, {"flops", g.flops}});
  return {{"reference", {{"params", c.reference.params}, {"flops", c.reference.flops},
                         {"tolerance", c.reference.tolerance}}},
          {"params", c.delta.params},
          {"flops", c.delta.flops},
          {"params_rel", c.params_rel},
          {"flops_rel", c.flops_rel},
          {"params_within", c.params_within},
          {"flops_within", c.flops_within},
          {"components", comps}};
}

std::string format_table(const std::vector<ComplexityReport>& reports) {
  std::vector<std::vector<std::string>> rows{{"Method", "Image Size", "#FLOPs", "#Params"}};
  for (const auto& r : reports) {
    rows.push_back({r.arch, image_label(r.image_w, r.image_h),
                    r.image_w == 0 ? "-" : with_unit(static_cast<double>(r.flops), 1e9, "G"),
                    with_unit(static_cast<double>(r.params), 1e6, "M")});
  }
  return render(rows);
}

std::string format_breakdown(const ComplexityReport& r) {
  std::vector<std::vector<std::string>> rows{{"Line", "Params", "FLOPs", "#FLOPs", "#Params"}};
  auto row = [&](const std::string& name, u64 p, u64 f) {
    rows.push_back({name, std::to_string(p), std::to_string(f),
                    with_unit(static_cast<double>(f), 1e9, "G"),
                    with_unit(static_cast<double>(p), 1e6, "M")});
  };
  for (const auto& l : r.lines) row(l.name, l.params, l.flops);
  row("total", r.params, r.flops);
  return render(rows);
}

std::string format_delta(const DeltaReport& d) {
  std::vector<std::vector<std::string>> rows{{"Line", "dParams", "dFLOPs", "d#FLOPs", "d#Params"}};
  auto row = [&](const std::string& name, std::int64_t p, std::int64_t f) {
    rows.push_back({name, std::to_string(p), std::to_string(f),
                    with_unit(static_cast<double>(f), 1e9, "G"),
                    with_unit(static_cast<double>(p), 1e6, "M")});
  };
  for (const auto& l : d.lines)
    if (l.params != 0 || l.flops != 0) row(l.name, l.params, l.flops);
  row("total (" + d.to + " - " + d.from + ")", d.params, d.flops);
  return render(rows);
}

}  // namespace a2fpn
