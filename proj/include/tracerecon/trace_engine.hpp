#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/codes.hpp"

namespace tracerecon {

enum class TraceMode : uint8_t { Inference, Training };

struct TraceEvent {
  uint64_t seq = 0;
  FunctionCode code = FunctionCode::Query;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// The victim's exact event timeline, before the observer's noise channel.
struct GroundTruthTrace {
  std::vector<TraceEvent> events;
  std::string arch;
  uint64_t n_queries = 0;
  TraceMode mode = TraceMode::Inference;
  std::optional<uint32_t> frozen_prefix;  // bias-bearing layers excluded from GRAD emission
  std::optional<uint64_t> seed;           // requested downstream seed, carried as metadata

  friend bool operator==(const GroundTruthTrace&, const GroundTruthTrace&) = default;
};

// Flush+Reload channel model: each victim event other than QUERY is missed
// independently with probability p_miss, and each code accrues spurious hits
// at a Poisson rate per victim query.
struct NoiseModel {
  double p_miss = 0.0;
  std::array<double, kNumFunctionCodes> spurious_rates{};  // indexed by FunctionCode

  static NoiseModel noiseless() { return {}; }

  double rate(FunctionCode code) const { return spurious_rates[static_cast<size_t>(code)]; }
  void set_rate(FunctionCode code, double r) { spurious_rates[static_cast<size_t>(code)] = r; }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

// What the attacker sees: the surviving hit events, re-indexed by slot.
struct Observation {
  std::vector<TraceEvent> events;
  uint64_t seed = 0;
  NoiseModel noise;
  std::string provenance_arch;  // victim arch if known, empty otherwise
  uint64_t n_queries = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

// A co-running tiny network that pollutes the channel. The textual form
// counts layers, e.g. "C:1", "C:1,R:1", "C:2,R:2,M:1" (R relu-activations
// attach to the convs, M appends merges).
struct DecoySpec {
  std::vector<LayerDesc> layers;
  double rate = 0.0;  // decoy iterations per victim query

  std::string descriptor() const;
};

DecoySpec parse_decoy_spec(const std::string& text, double rate);

enum class ObfuscationVariant : uint8_t { InsertPreserving, Unravel };
enum class InsertKind : uint8_t { ConvRelu, IdentityBlock };

struct ObfuscationSpec {
  ObfuscationVariant variant = ObfuscationVariant::InsertPreserving;
  int insert_count = 0;
  InsertKind insert_kind = InsertKind::ConvRelu;
  uint64_t seed = 0;
  int k_blocks = 3;
};

// n_queries expansions of the template; in training mode each query is
// followed by one GRAD per bias-bearing layer outside the frozen prefix,
// emitted in reverse layer order.
GroundTruthTrace emit_trace(const ArchTemplate& t, uint64_t n_queries, TraceMode mode,
                            std::optional<uint32_t> frozen_prefix = std::nullopt);

// Applies the noise channel. QUERY events always survive so that query
// segmentation stays reliable. Deterministic given (trace, noise, seed).
Observation observe(const GroundTruthTrace& trace, const NoiseModel& noise, uint64_t seed);

// Interleaves ceil(rate * n_queries) decoy iterations (at least one, without
// QUERY events) into the victim trace at uniformly random positions,
// preserving both event orders. The victim's QUERY count is unchanged.
GroundTruthTrace merge_decoy(const GroundTruthTrace& victim, const DecoySpec& decoy, uint64_t seed);

// insert_preserving obfuscation: adds insert_count dimension-preserving
// layers (conv+relu inside conv-bearing blocks, or whole identity blocks) at
// seeded-random positions. Attribute counts strictly increase.
ArchTemplate obfuscate(const ArchTemplate& t, const ObfuscationSpec& spec, uint64_t seed);

// Rewrites the first k merge-terminated blocks as independent computational
// paths, executed in the fixed schedule
//   k=1: B1 B1      k=2: B1 B1 B2      k>=3: U(k-1) U(k-1) Bk
// so layer computations are duplicated across paths. k = 0 returns the
// template unchanged.
ArchTemplate unravel_blocks(const ArchTemplate& t, int k_blocks);

// Line-based trace/observation files: '#'-prefixed key=value headers, then
// "seq,CODE" rows. Round-trips bit-exactly.
std::string serialize_trace(const GroundTruthTrace& trace);
std::string serialize_observation(const Observation& obs);
GroundTruthTrace parse_trace(const std::string& text);
Observation parse_observation(const std::string& text);

// Dispatches on the "kind" header.
bool file_is_observation(const std::string& text);

}  // namespace tracerecon
