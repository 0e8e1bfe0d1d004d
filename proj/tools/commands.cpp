// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2fpn/analysis.hpp"
#include "a2fpn/init.hpp"
#include "a2fpn/pyramid.hpp"
#include "a2fpn/tensor_io.hpp"
#include "a2fpn/train.hpp"
#include "a2fpn/verify.hpp"
#include "run_report.hpp"

namespace a2fpn::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Bad flags or config contents; always exit 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Parses "AxB" into {A, B}.
std::pair<std::size_t, std::size_t> parse_extent_pair(const std::string& text, const char* what) {
  const auto x = text.find('x');
  auto number = [&](const std::string& part) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError(std::string("bad ") + what + " '" + text + "'");
    }
    return static_cast<std::size_t>(std::stoull(part));
  };
  if (x == std::string::npos) throw UsageError(std::string("bad ") + what + " '" + text + "'");
  return {number(text.substr(0, x)), number(text.substr(x + 1))};
}

// Runs `body`, maps exceptions to exit codes and always leaves a run report.
template <typename Body>
int guarded(RunReport& report, const fs::path& out, std::ostream& err, Body&& body) {
  const auto start = Clock::now();
  int code = kExitFailure;
  try {
    code = body();
    report.outcome = code == kExitOk ? "pass" : "fail";
  } catch (const UsageError& e) {
    report.message = e.what();
    code = kExitUsage;
  } catch (const DimensionError& e) {
    report.message = e.what();
    code = kExitFailure;
  } catch (const NumericError& e) {
    report.message = e.what();
    code = kExitFailure;
  } catch (const std::invalid_argument& e) {
    report.message = e.what();
    code = kExitUsage;
  } catch (const FormatError& e) {
    report.message = e.what();
    code = kExitUsage;
  } catch (const std::exception& e) {
    report.message = e.what();
    code = kExitFailure;
  }
  if (!report.message.empty()) {
    report.outcome = "error";
    err << report.command << ": " << report.message << '\n';
  }
  report.wall_seconds = seconds_since(start);
  try {
    write_run_report(report, out);
  } catch (const std::exception& e) {
    err << report.command << ": " << e.what() << '\n';
    if (code == kExitOk) code = kExitFailure;
  }
  return code;
}

RunReport new_report(const char* command) {
  RunReport r;
  r.command = command;
  return r;
}

PyramidConfig config_or(const std::optional<fs::path>& path, PyramidConfig fallback) {
  if (!path) return fallback;
  if (!fs::exists(*path)) throw UsageError("config " + path->string() + " does not exist");
  return load_config(*path);
}

}  // namespace

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& log, std::ostream& err) {
  RunReport report = new_report("gradcheck");
  return guarded(report, args.out, err, [&] {
    const nlohmann::json cfg = read_json(args.config);
    if (!cfg.is_object()) throw UsageError("gradcheck config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      if (key != "ops" && key != "eps" && key != "tol" && key != "seed") {
        throw UsageError("unknown gradcheck config key '" + key + "'");
      }
    }
    std::vector<std::string> ops;
    GradCheckOptions opt;
    try {
      const auto sel = cfg.value("ops", nlohmann::json("all"));
      if (sel.is_string() && sel.get<std::string>() == "all") {
        ops = gradcheck_ops();
      } else {
        ops = sel.get<std::vector<std::string>>();
      }
      opt.eps = args.eps.value_or(cfg.value("eps", opt.eps));
      opt.seed = args.seed.value_or(cfg.value("seed", opt.seed));
      if (args.tol) {
        opt.tol = args.tol;
      } else if (cfg.contains("tol") && !cfg.at("tol").is_null()) {
        opt.tol = cfg.at("tol").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad gradcheck config: ") + e.what());
    }
    const auto& known = gradcheck_ops();
    for (const auto& op : ops) {
      if (std::find(known.begin(), known.end(), op) == known.end()) {
        throw UsageError("unknown op '" + op + "'");
      }
    }
    if (!(opt.eps > 0)) throw UsageError("eps must be positive");
    if (opt.tol && !(*opt.tol >= 0)) throw UsageError("tol must be non-negative");

    nlohmann::json resolved{{"ops", ops}, {"eps", opt.eps}, {"seed", opt.seed}};
    resolved["tol"] = opt.tol ? nlohmann::json(*opt.tol) : nlohmann::json(nullptr);
    report.config_digest = config_digest(resolved);
    report.seed = opt.seed;

    std::vector<GradCheckReport> results;
    bool pass = true;
    for (const auto& op : ops) {
      results.push_back(check_gradients(op, opt));
      const auto& r = results.back();
      pass = pass && r.pass;
      char line[256];
      std::snprintf(line, sizeof line, "%-28s %s  max_rel_err=%.3e  tol=%.0e  %6.2fs", r.op.c_str(),
                    r.pass ? "PASS" : "FAIL", r.max_rel_err, r.tol, r.seconds);
      log << line;
      if (!r.pass && !r.error.empty()) log << "  error: " << r.error;
      if (!r.pass && r.error.empty()) log << "  worst: " << r.worst;
      log << '\n';
    }
    fs::create_directories(args.out);
    write_json(args.out / "gradcheck.json", gradcheck_report_json(results));
    report.artifacts.push_back("gradcheck.json");
    log << (pass ? "all gradient checks passed" : "gradient checks FAILED") << '\n';
    return pass ? kExitOk : kExitFailure;
  });
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

int cmd_oracle(const OracleArgs& args, std::ostream& log, std::ostream& err) {
  RunReport report = new_report("oracle");
  report.seed = args.seed;
  return guarded(report, args.out, err, [&] {
    if (args.cases == 0) throw UsageError("cases must be positive");
    report.config_digest =
        config_digest({{"seed", args.seed}, {"cases", args.cases}, {"tol", args.tol}});
    const OracleReport r = oracle_suite(args.seed, args.cases, args.tol);
    for (const auto& o : r.ops) {
      char line[256];
      std::snprintf(line, sizeof line, "%-26s %s  cases=%zu  max_abs_dev=%.3e", o.op.c_str(),
                    o.pass ? "PASS" : "FAIL", o.cases, o.max_abs_dev);
      log << line << '\n';
    }
    fs::create_directories(args.out);
    write_json(args.out / "oracle.json", to_json(r));
    report.artifacts.push_back("oracle.json");
    return r.pass() ? kExitOk : kExitFailure;
  });
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace {

template <typename T>
nlohmann::json run_forward(const PyramidConfig& cfg, const Tensor<T>& image, const fs::path& out,
                           RunReport& report) {
  const ModelParams<T> model = init_model<T>(cfg);
  const auto levels = forward_pyramid(image, model, cfg);
  fs::create_directories(out);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& l : levels) {
    const std::string file = "level" + std::to_string(l.level) + ".a2tsr";
    write_a2tsr(out / file, l.data);
    report.artifacts.push_back(file);
    entries.push_back({{"level", l.level}, {"stride", l.stride}, {"shape", l.data.shape()},
                       {"file", file}});
  }
  return {{"arch", std::string(to_string(cfg.arch))},
          {"width", cfg.c},
          {"dtype", cfg.dtype},
          {"input_shape", image.shape()},
          {"levels", entries}};
}

}  // namespace

int cmd_forward(const ForwardArgs& args, std::ostream& log, std::ostream& err) {
  RunReport report = new_report("forward");
  report.seed = args.seed;
  return guarded(report, args.out, err, [&] {
    if (args.input.has_value() == args.random.has_value()) {
      throw UsageError("exactly one of --input and --random is required");
    }
    const Arch arch = parse_arch(args.arch.value_or("a2fpn"));
    PyramidConfig cfg = config_or(args.config, reference_config(arch));
    if (args.arch) cfg.arch = arch;

    std::size_t h = 0, w = 0;
    Tensor<double> image;
    if (args.random) {
      std::tie(h, w) = parse_extent_pair(*args.random, "--random extent");
    } else {
      image = load_tensor<double>(*args.input);
      if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("input must be 3 x H x W, got " + shape_to_string(image.shape()));
      }
      h = image.dim(1);
      w = image.dim(2);
    }
    if (h == 0 || w == 0 || h % 64 != 0 || w % 64 != 0) {
      throw DimensionError("image extents " + std::to_string(h) + "x" + std::to_string(w) +
                           " must be positive multiples of 64");
    }
    cfg.image_h = h;
    cfg.image_w = w;
    cfg.validate();
    report.config_digest = config_digest(config_to_json(cfg));

    nlohmann::json manifest;
    if (cfg.dtype == "f64") {
      Tensor<double> x = image;
      if (!args.input) {
        Rng rng(args.seed);
        x = random_uniform<double>({3, h, w}, rng, 0.0, 1.0);
      }
      manifest = run_forward(cfg, x, args.out, report);
    } else {
      Tensor<float> x;
      if (args.input) {
        x = image.cast<float>();
      } else {
        Rng rng(args.seed);
        x = random_uniform<float>({3, h, w}, rng, 0.0, 1.0);
      }
      manifest = run_forward(cfg, x, args.out, report);
    }
    write_json(args.out / "manifest.json", manifest);
    report.artifacts.push_back("manifest.json");
    for (const auto& l : manifest.at("levels")) {
      log << "level " << l.at("level") << "  stride " << l.at("stride") << "  shape "
          << l.at("shape").dump() << '\n';
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// count
// ---------------------------------------------------------------------------

int cmd_count(const CountArgs& args, std::ostream& log, std::ostream& err) {
  RunReport report = new_report("count");
  const fs::path out = args.out.value_or("a2fpn-out/count");
  return guarded(report, out, err, [&] {
    const Arch arch = parse_arch(args.arch);
    std::optional<Arch> other;
    if (args.diff) other = parse_arch(*args.diff);
    const auto [w, h] = parse_extent_pair(args.image_size, "--image-size");
    const BackboneSpec backbone = parse_backbone_spec(args.backbone);
    auto cfg_for = [&](Arch a) {
      PyramidConfig c = config_or(args.config, reference_config(a));
      c.arch = a;
      return c;
    };

    nlohmann::json settings{{"arch", args.arch},
                            {"image_size", {w, h}},
                            {"backbone", backbone.channels},
                            {"config", config_to_json(cfg_for(arch))}};
    if (other) settings["diff"] = *args.diff;
    report.config_digest = config_digest(settings);

    std::vector<ComplexityReport> reports{count_flops(arch, backbone, w, h, cfg_for(arch))};
    if (other) reports.push_back(count_flops(*other, backbone, w, h, cfg_for(*other)));
    log << format_table(reports) << '\n' << format_breakdown(reports[0]);

    nlohmann::json result{{"reports", nlohmann::json::array()}};
    for (const auto& r : reports) result["reports"].push_back(to_json(r));
    if (other) {
      const DeltaReport delta = diff_report(reports[0], reports[1]);
      log << '\n' << format_delta(delta);
      result["delta"] = to_json(delta);
      if (arch == Arch::a2fpn && *other == Arch::pafpn) {
        const auto cmp = compare_with_reference(cfg_for(Arch::a2fpn));
        char line[256];
        std::snprintf(line, sizeof line,
                      "\nreference delta at 1280x832, resnet50: params %.2fM (ours %.2fM, %+.1f%%)"
                      ", FLOPs %.2fG (ours %.2fG, %+.1f%%), band +-%.0f%%\n",
                      cmp.reference.params / 1e6, static_cast<double>(cmp.delta.params) / 1e6,
                      100 * cmp.params_rel, cmp.reference.flops / 1e9,
                      static_cast<double>(cmp.delta.flops) / 1e9, 100 * cmp.flops_rel,
                      100 * cmp.reference.tolerance);
        log << line;
        result["reference_comparison"] = to_json(cmp);
      }
    }
    fs::create_directories(out);
    write_json(out / "complexity.json", result);
    report.artifacts.push_back("complexity.json");
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------

namespace {

template <typename T>
bool run_training(const PyramidConfig& cfg, const ToyTrainOptions& opt, const fs::path& out,
                  RunReport& report, std::ostream& log) {
  const ToyTrainResult<T> result = train_toy<T>(cfg, opt);
  fs::create_directories(out);
  {
    std::ofstream csv(out / "loss.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out / "loss.csv").string());
    csv << "step,loss,reg_loss\n";
    for (const auto& r : result.history) {
      char line[128];
      std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", r.step, r.loss, r.reg_loss);
      csv << line;
    }
  }
  report.artifacts.push_back("loss.csv");
  save_checkpoint(result.params, out / "checkpoint");
  report.artifacts.push_back("checkpoint/manifest.json");

  char line[256];
  std::snprintf(line, sizeof line, "initial loss %.6g  final loss %.6g  ratio %.4f%s\n",
                result.initial_loss(), result.final_loss(),
                result.final_loss() / result.initial_loss(), result.diverged ? "  (diverged)" : "");
  log << line;
  return result.converged();
}

}  // namespace

int cmd_train_toy(const TrainArgs& args, std::ostream& log, std::ostream& err) {
  RunReport report = new_report("train-toy");
  return guarded(report, args.out, err, [&] {
    const Arch arch = parse_arch(args.arch.value_or("a2fpn"));
    PyramidConfig cfg = config_or(args.config, toy_config(arch));
    if (args.arch) cfg.arch = arch;
    if (args.seed) cfg.seed = *args.seed;
    cfg.validate();
    if (!(args.lr >= 0)) throw UsageError("lr must be non-negative");
    if (args.images == 0) throw UsageError("images must be positive");

    ToyTrainOptions opt;
    opt.steps = args.steps;
    opt.lr = args.lr;
    opt.images = args.images;
    opt.workers = worker_count_from_env();
    report.seed = cfg.seed;
    report.config_digest = config_digest({{"config", config_to_json(cfg)},
                                          {"steps", opt.steps},
                                          {"lr", opt.lr},
                                          {"momentum", opt.momentum},
                                          {"images", opt.images}});
    const bool ok = cfg.dtype == "f64" ? run_training<double>(cfg, opt, args.out, report, log)
                                       : run_training<float>(cfg, opt, args.out, report, log);
    log << (ok ? "converged: final loss below 10% of initial" : "did not converge") << '\n';
    return ok ? kExitOk : kExitFailure;
  });
}

}  // namespace a2fpn::cli
