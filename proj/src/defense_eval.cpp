#include "tracerecon/defense_eval.hpp"

#include "tracerecon/errors.hpp"
#include "tracerecon/rng.hpp"

namespace tracerecon {

namespace {

// Per-query mean attribute vector of one observation.
AttributeVector observed_mean(const Observation& obs) {
  const auto sequences = split_queries(obs);
  AttributeVector mean;
  for (const auto& seq : sequences) {
    const AttributeVector v = extract_attributes(seq);
    for (int i = 0; i < kNumAttributes; ++i) mean[i] += v[i];
  }
  for (int i = 0; i < kNumAttributes; ++i) mean[i] /= static_cast<double>(sequences.size());
  return mean;
}

// Observation seeds are shared between the defended and baseline arms so the
// comparison is paired.
uint64_t obs_seed(uint64_t seed, int run) { return derive_seed(seed, static_cast<uint64_t>(run), 1); }

DefenseReport run_paired(const std::string& descriptor, const ArchTemplate& victim,
                         const std::vector<GroundTruthTrace>& defended_traces, int runs,
                         const NoiseModel& noise, uint64_t seed, uint64_t queries_per_run) {
  const GroundTruthTrace baseline_trace = emit_trace(victim, queries_per_run, TraceMode::Inference);
  const AttributeVector truth = attributes_of(victim);

  DefenseReport report;
  report.descriptor = descriptor;
  report.arch = victim.name;
  report.runs = static_cast<uint64_t>(runs);
  report.queries_per_run = queries_per_run;
  report.seed = seed;
  report.events_per_run = defended_traces.front().events.size();
  report.baseline_events_per_run = baseline_trace.events.size();

  double err_sum = 0, base_err_sum = 0;
  for (int r = 0; r < runs; ++r) {
    const uint64_t s = obs_seed(seed, r);
    const AttributeVector defended = observed_mean(observe(defended_traces[static_cast<size_t>(r) %
                                                                           defended_traces.size()],
                                                           noise, s));
    const AttributeVector baseline = observed_mean(observe(baseline_trace, noise, s));
    report.per_run.push_back(defended);
    report.baseline_per_run.push_back(baseline);
    err_sum += l1_error(defended, truth);
    base_err_sum += l1_error(baseline, truth);
    for (int i = 0; i < kNumAttributes; ++i) {
      report.mean[i] += defended[i];
      report.baseline_mean[i] += baseline[i];
    }
  }
  for (int i = 0; i < kNumAttributes; ++i) {
    report.mean[i] /= runs;
    report.baseline_mean[i] /= runs;
  }
  report.mean_error = err_sum / runs;
  report.baseline_error = base_err_sum / runs;
  return report;
}

}  // namespace

DefenseReport eval_decoy(const ArchTemplate& victim, const DecoySpec& decoy, int runs,
                         const NoiseModel& noise, uint64_t seed, uint64_t queries_per_run) {
  if (runs < 1) throw ContractError("eval_decoy: runs must be >= 1");
  if (!(decoy.rate > 0.0)) throw ContractError("eval_decoy: decoy rate must be > 0");

  const GroundTruthTrace victim_trace = emit_trace(victim, queries_per_run, TraceMode::Inference);
  std::vector<GroundTruthTrace> defended;
  defended.reserve(static_cast<size_t>(runs));
  for (int r = 0; r < runs; ++r)
    defended.push_back(merge_decoy(victim_trace, decoy, derive_seed(seed, static_cast<uint64_t>(r), 0)));

  return run_paired("decoy " + decoy.descriptor() + " rate=" + format_double(decoy.rate), victim,
                    defended, runs, noise, seed, queries_per_run);
}

DefenseReport eval_obfuscation(const ArchTemplate& victim, const ObfuscationSpec& spec, int runs,
                               const NoiseModel& noise, uint64_t seed, uint64_t queries_per_run) {
  if (runs < 1) throw ContractError("eval_obfuscation: runs must be >= 1");

  ArchTemplate defended_template;
  std::string descriptor;
  if (spec.variant == ObfuscationVariant::Unravel) {
    defended_template = unravel_blocks(victim, spec.k_blocks);
    descriptor = "unravel k=" + std::to_string(spec.k_blocks);
  } else {
    defended_template = obfuscate(victim, spec, spec.seed);
    descriptor = std::string("insert_preserving ") +
                 (spec.insert_kind == InsertKind::ConvRelu ? "conv_relu" : "identity_block") +
                 " count=" + std::to_string(spec.insert_count);
  }

  const std::vector<GroundTruthTrace> defended = {
      emit_trace(defended_template, queries_per_run, TraceMode::Inference)};
  return run_paired(descriptor, victim, defended, runs, noise, seed, queries_per_run);
}

}  // namespace tracerecon
