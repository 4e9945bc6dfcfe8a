#pragma once

#include <string>

#include "tracerecon/trace_engine.hpp"

namespace tracerecon {

// Shipped defaults for every stochastic knob. The builtin values mirror
// configs/defaults.cfg; the noise parameters are the committed output of the
// calibration grid search (`calibrate --noise` re-derives them).
struct Defaults {
  NoiseModel noise;
  double decoy_rate = 0.0;
  int dataset_per_arch = 0;
  int cv_folds = 0;
  int defense_runs = 0;
  int defense_queries = 0;

  static Defaults builtin();
};

Defaults parse_config(const std::string& text);
std::string config_to_text(const Defaults& d);

}  // namespace tracerecon
