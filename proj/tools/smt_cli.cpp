// smt: command-line front end for synthetic data, training, evaluation,
// baselines, single predictions and attention maps.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "commands.hpp"
#include "smt/error.hpp"

namespace {

using namespace smt::cli;

void add_overrides(CLI::App* cmd, Overrides& o, bool model_flags) {
  cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--site", o.site, "site file (latitude, longitude, altitude_m, utc_offset_min)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "seed for every random draw");
  cmd->add_option("--horizon-min", o.horizon_min, "forecast horizon in minutes (default 120)");
  if (model_flags) {
    cmd->add_option("--pillars", o.pillars, "both | image_only | ts_only");
    cmd->add_option("--patch-shape", o.patch_shape, "square | row | column");
    cmd->add_option("--frames", o.frames, "images per sample (1-3)");
    cmd->add_option("--window-len", o.window_len, "history window in 10-minute slots (default 144)");
    cmd->add_option("--epochs", o.epochs, "maximum training epochs");
  }
  cmd->add_option("--set", o.set, "extra key=value override (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal sky-image + GHI transformer forecaster"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic sky-camera dataset");
  add_overrides(c_synth, synth.overrides, false);
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--days", synth.days, "number of days");
  c_synth->add_option("--regime", synth.regime, "clear | persistent | advecting");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model on a manifest");
  add_overrides(c_train, tr.overrides, true);
  c_train->add_option("--manifest", tr.manifest, "manifest CSV (timestamp,image_path,ghi)")
      ->required()
      ->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "run directory")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  add_overrides(c_eval, ev.overrides, false);
  c_eval->add_option("--ckpt", ev.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--manifest", ev.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out, "report directory")->required();
  c_eval->add_option("--split", ev.split, "train | val | test | held_out | all (default test)");

  BaselineArgs bl;
  auto* c_base = app.add_subcommand("baseline", "smart-persistence forecasts on a manifest split");
  add_overrides(c_base, bl.overrides, true);
  c_base->add_option("--ckpt", bl.ckpt, "take data and split settings from this checkpoint")
      ->check(CLI::ExistingFile);
  c_base->add_option("--manifest", bl.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  c_base->add_option("--out", bl.out, "report directory")->required();
  c_base->add_option("--split", bl.split, "train | val | test | held_out | all (default test)");

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "forecast from images and a GHI window");
  c_pred->add_option("--ckpt", pr.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_pred->add_option("--image", pr.images, "PPM frame, oldest first (repeat per frame)")
      ->check(CLI::ExistingFile);
  c_pred->add_option("--window", pr.window, "CSV timestamp,ghi with one row per 10-minute slot")
      ->required()
      ->check(CLI::ExistingFile);

  AttnArgs at;
  auto* c_attn = app.add_subcommand("attn", "attention heatmaps for one sample");
  add_overrides(c_attn, at.overrides, false);
  c_attn->add_option("--ckpt", at.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_attn->add_option("--manifest", at.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  c_attn->add_option("--time", at.time, "sample timestamp, e.g. 2023-06-10T12:00:00-07:00")->required();
  c_attn->add_option("--out", at.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_train) return cmd_train(tr);
    if (*c_eval) return cmd_eval(ev);
    if (*c_base) return cmd_baseline(bl);
    if (*c_pred) return cmd_predict(pr);
    if (*c_attn) return cmd_attn(at);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
