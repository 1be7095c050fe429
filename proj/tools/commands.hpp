#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smt/config.hpp"

namespace smt::cli {

/// Flags that override keys of a run config.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> site;
  std::optional<long long> seed;
  std::optional<int> horizon_min;
  std::optional<std::string> pillars;
  std::optional<std::string> patch_shape;
  std::optional<int> frames;
  std::optional<int> window_len;
  std::optional<int> epochs;
  std::vector<std::string> set;  // raw key=value pairs
};

/// Config file (if any) with the overrides applied; each override is logged
/// to stderr.
KeyValues effective_settings(const Overrides& o);

struct SynthArgs {
  Overrides overrides;
  std::string out;
  std::optional<int> days;
  std::optional<std::string> regime;
};

struct TrainArgs {
  Overrides overrides;
  std::string manifest;
  std::string out;
};

struct EvalArgs {
  Overrides overrides;
  std::string ckpt;
  std::string manifest;
  std::string out;
  std::string split = "test";
};

struct BaselineArgs {
  Overrides overrides;
  std::optional<std::string> ckpt;
  std::string manifest;
  std::string out;
  std::string split = "test";
};

struct PredictArgs {
  std::string ckpt;
  std::vector<std::string> images;
  std::string window;
};

struct AttnArgs {
  Overrides overrides;
  std::string ckpt;
  std::string manifest;
  std::string time;
  std::string out;
};

int cmd_synth(const SynthArgs& a);
int cmd_train(const TrainArgs& a);
int cmd_eval(const EvalArgs& a);
int cmd_baseline(const BaselineArgs& a);
int cmd_predict(const PredictArgs& a);
int cmd_attn(const AttnArgs& a);

}  // namespace smt::cli
