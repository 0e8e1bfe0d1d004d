// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace a2fpn::cli {

int run(int argc, const char* const* argv, std::ostream& log, std::ostream& err) {
  CLI::App app{"A2FPN pyramid necks: gradient checks, oracles, forward runs, complexity, toy training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GradcheckArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every registered op");
  gc->add_option("config", grad.config, "Gradient-check config (JSON)")->required();
  gc->add_option("--tol", grad.tol, "Relative-error tolerance for every op");
  gc->add_option("--eps", grad.eps, "Central-difference step");
  gc->add_option("--seed", grad.seed, "Seed of the check instances");
  gc->add_option("--out", grad.out, "Output directory");

  OracleArgs oracle;
  auto* oc = app.add_subcommand("oracle", "Compare production kernels with naive loops");
  oc->add_option("--seed", oracle.seed, "Shape and data seed");
  oc->add_option("--cases", oracle.cases, "Random shapes per op");
  oc->add_option("--tol", oracle.tol, "Maximum absolute deviation");
  oc->add_option("--out", oracle.out, "Output directory");

  ForwardArgs fwd;
  auto* fc = app.add_subcommand("forward", "Run a neck on an image and save the pyramid");
  fc->add_option("--arch", fwd.arch, "fpn, pafpn, a2fpn or a2fpn_lite");
  fc->add_option("--config", fwd.config, "Pyramid config (JSON)");
  fc->add_option("--input", fwd.input, "A2TSR image tensor, 3 x H x W");
  fc->add_option("--random", fwd.random, "Random image of size HxW");
  fc->add_option("--seed", fwd.seed, "Seed of the random image");
  fc->add_option("--out", fwd.out, "Output directory");

  CountArgs count;
  auto* cc = app.add_subcommand("count", "Parameter and FLOP counts of a neck");
  cc->add_option("--arch", count.arch, "fpn, pafpn, a2fpn or a2fpn_lite");
  cc->add_option("--image-size", count.image_size, "Image size WxH");
  cc->add_option("--backbone-spec", count.backbone, "toy, resnet50 or four channel counts a,b,c,d");
  cc->add_option("--diff", count.diff, "Architecture to subtract");
  cc->add_option("--config", count.config, "Pyramid config (JSON)");
  cc->add_option("--out", count.out, "Output directory");

  TrainArgs train;
  auto* tc = app.add_subcommand("train-toy", "Train on the synthetic segmentation task");
  tc->add_option("--arch", train.arch, "fpn, pafpn, a2fpn or a2fpn_lite");
  tc->add_option("--config", train.config, "Pyramid config (JSON)");
  tc->add_option("--steps", train.steps, "Optimizer steps");
  tc->add_option("--lr", train.lr, "Learning rate");
  tc->add_option("--seed", train.seed, "Initialization seed");
  tc->add_option("--images", train.images, "Synthetic images in the batch");
  tc->add_option("--out", train.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, error;
    const int code = app.exit(e, out, error);
    log << out.str();
    err << error.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (gc->parsed()) return cmd_gradcheck(grad, log, err);
  if (oc->parsed()) return cmd_oracle(oracle, log, err);
  if (fc->parsed()) return cmd_forward(fwd, log, err);
  if (cc->parsed()) return cmd_count(count, log, err);
  return cmd_train_toy(train, log, err);
}

}  // namespace a2fpn::cli
