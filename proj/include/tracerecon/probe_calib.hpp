#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tracerecon {

// Hit/miss threshold calibration for a Flush+Reload probe, exercised on
// synthetic reload-latency samples. A reload faster than the threshold means
// the victim pulled the line back into the cache.

enum class ProbeClass : uint8_t { Hit, Miss };

// Otsu's criterion over a 1-cycle-wide histogram: returns the threshold t
// maximizing between-class variance of {x < t} vs {x >= t}, lowest t on
// ties. Needs at least two distinct latency values.
//
// The between-class variance comparison uses exact integer moments, so the
// result matches an exhaustive scan bit-for-bit. Inputs are bounded to keep
// the moment arithmetic inside int64: latency < 2^20 cycles, at most 2^20
// samples.
int64_t otsu_threshold(std::span<const int64_t> samples);

// HIT iff latency < threshold.
ProbeClass classify_latency(int64_t latency, int64_t threshold);

// One positive integer latency per line; '#' lines and blank lines skipped.
std::vector<int64_t> parse_latency_samples(const std::string& text);

// Two-column CSV "latency,count" over the occupied range.
std::string histogram_csv(std::span<const int64_t> samples);

}  // namespace tracerecon
