// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2fpn/pyramid.hpp"

namespace a2fpn {

// FLOP conventions: one multiply-accumulate is one FLOP. Convolutions cost
// out * in * k^2 * h_out * w_out (bias free), matrix products m * k * n,
// softmax 3 per element, bilinear resize 1 per output element, max pooling 1
// per input element, other elementwise ops and normalizations 1 per element.
// Nearest upsampling, pixel shuffle, concatenation and reshapes are free.

std::uint64_t conv_param_count(std::size_t in_ch, std::size_t out_ch, std::size_t k, bool bias);
std::uint64_t conv_flop_count(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                              std::size_t h_out, std::size_t w_out);

struct ComplexityLine {
  std::string name;  // parameter prefix of the submodule, e.g. "td.l3.kpred.encoder"
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct ComplexityReport {
  std::string arch;
  std::size_t image_w = 0;  // 0 for parameter-only reports
  std::size_t image_h = 0;
  std::vector<ComplexityLine> lines;
  std::uint64_t params = 0;  // sum over lines
  std::uint64_t flops = 0;   // sum over lines

  void add(std::string name, std::uint64_t params, std::uint64_t flops);
  const ComplexityLine* find(const std::string& name) const;
};

/// Neck parameters only; backbone and head are excluded. `arch` and
/// `backbone` override the fields of `cfg`. A width of zero describes an
/// empty neck. Throws std::invalid_argument for an invalid config.
ComplexityReport count_params(Arch arch, const BackboneSpec& backbone, const PyramidConfig& cfg);

/// Parameters and FLOPs of the neck at the given image size. Throws
/// DimensionError unless both extents are positive multiples of 64.
ComplexityReport count_flops(Arch arch, const BackboneSpec& backbone, std::size_t image_w,
                             std::size_t image_h, const PyramidConfig& cfg);

struct DeltaLine {
  std::string name;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct DeltaReport {
  std::string from;  // b
  std::string to;    // a
  std::size_t image_w = 0;
  std::size_t image_h = 0;
  std::vector<DeltaLine> lines;  // sorted by name, lines missing on one side count as zero
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

/// a - b per line and in total. Throws std::invalid_argument when the image
/// sizes differ.
DeltaReport diff_report(const ComplexityReport& a, const ComplexityReport& b);

/// Reference neck deltas of A2-FPN over PAFPN (Mask R-CNN, ResNet-50,
/// 1280 x 832) and the band within which our counts are expected to fall.
struct ReferenceDelta {
  double params = 9.77e6;
  double flops = 66.34e9;
  double tolerance = 0.2;
};

struct ReferenceComparison {
  ReferenceDelta reference;
  DeltaReport delta;                      // a2fpn - pafpn
  std::vector<DeltaLine> components;      // delta grouped by top-level component
  double params_rel = 0;                  // (ours - reference) / reference
  double flops_rel = 0;
  bool params_within = false;
  bool flops_within = false;
};

/// A2-FPN minus PAFPN at the reference settings (ResNet-50 channels,
/// 1280 x 832, `cfg` hyper-parameters), grouped per component.
ReferenceComparison compare_with_reference(const PyramidConfig& cfg,
                                           const ReferenceDelta& reference = {});

nlohmann::json to_json(const ComplexityReport& r);
nlohmann::json to_json(const DeltaReport& d);
nlohmann::json to_json(const ReferenceComparison& c);

/// Columns Method, Image Size, #FLOPs, #Params (FLOPs in G, params in M).
std::string format_table(const std::vector<ComplexityReport>& reports);
/// One row per line with both raw counts and G/M columns.
std::string format_breakdown(const ComplexityReport& r);
std::string format_delta(const DeltaReport& d);

}  // namespace a2fpn
