#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/recon.hpp"
#include "tracerecon/trace_engine.hpp"

namespace tracerecon {

// Defended-vs-baseline extraction comparison. The baseline runs the same
// victim under the same noise and observation seeds, without the defense.
// Table time columns are replaced by simulated event counts.
struct DefenseReport {
  std::string descriptor;
  std::string arch;
  uint64_t runs = 0;
  uint64_t queries_per_run = 0;
  uint64_t seed = 0;

  std::vector<AttributeVector> per_run;  // defended per-run mean attribute vectors
  AttributeVector mean;
  double mean_error = 0.0;  // vs the undefended ground truth

  std::vector<AttributeVector> baseline_per_run;
  AttributeVector baseline_mean;
  double baseline_error = 0.0;

  uint64_t events_per_run = 0;  // victim + defense events in one run's trace
  uint64_t baseline_events_per_run = 0;
};

DefenseReport eval_decoy(const ArchTemplate& victim, const DecoySpec& decoy, int runs,
                         const NoiseModel& noise, uint64_t seed, uint64_t queries_per_run = 10);

DefenseReport eval_obfuscation(const ArchTemplate& victim, const ObfuscationSpec& spec, int runs,
                               const NoiseModel& noise, uint64_t seed, uint64_t queries_per_run = 10);

}  // namespace tracerecon
