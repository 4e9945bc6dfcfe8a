#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/codes.hpp"
#include "tracerecon/trace_engine.hpp"

namespace tracerecon {

// Averaged attribute extraction from one attack. Mode S averages independent
// single-query observations, mode L averages consecutive queries of one
// observation window.
struct ExtractionReport {
  char mode = 'S';
  std::vector<AttributeVector> per_query;
  AttributeVector mean;
  std::string arch;
  std::optional<AttributeVector> ground_truth;
  std::optional<double> error;        // l1 distance of mean from ground truth
  std::optional<double> denominator;  // sum of ground-truth attribute counts
};

enum class BlockKind : uint8_t { Stem, ConvNet, Residual, Identity, Classifier };

const char* to_string(BlockKind kind);

struct ReconBlock {
  BlockKind kind = BlockKind::ConvNet;
  int convs = 0;  // fc tail length for classifier blocks

  friend bool operator==(const ReconBlock&, const ReconBlock&) = default;
};

struct BlockStructure {
  std::vector<ReconBlock> blocks;
  int fc_tail = 0;
  bool softmax = false;

  friend bool operator==(const BlockStructure&, const BlockStructure&) = default;
};

struct Candidate {
  std::string name;
  int distance = 0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct FreezeReport {
  int updated_layers = 0;
  int frozen_prefix = 0;
  double mean_grads_per_query = 0.0;
};

// One code sequence per QUERY event, excluding the QUERY events themselves.
// Events preceding the first QUERY are outside any query and are dropped.
std::vector<std::vector<FunctionCode>> split_queries(const Observation& obs);

// Counts the eight attribute codes; GRAD events are ignored.
AttributeVector extract_attributes(const std::vector<FunctionCode>& query_seq);

// Mode 'S' requires >= 10 single-query observations; mode 'L' one observation
// with >= 10 consecutive queries.
ExtractionReport attack_report(const std::vector<Observation>& observations, char mode,
                               const AttributeVector* ground_truth);

// Segments a per-query sequence into blocks. Every MPOOL, APOOL and MERGE
// event closes the block in progress; BIAS absorbs into the preceding op.
// Never aborts on malformed sequences.
BlockStructure reconstruct(const std::vector<FunctionCode>& query_seq);

// Block structure a template reconstructs to under a noiseless channel.
BlockStructure template_structure(const ArchTemplate& t);

// Candidates ranked by block-signature edit distance, ascending, ties broken
// by name. Distance 0 is an exact structural match.
std::vector<Candidate> identify(const BlockStructure& structure, const Catalog& catalog);

// Edit distance between block signatures (kind + conv count, unit costs).
int signature_distance(const BlockStructure& a, const BlockStructure& b);

// updated = round(mean GRAD events per query); frozen = bias-bearing layers
// of the template minus updated, floored at zero.
FreezeReport detect_freeze(const Observation& training_obs, const ArchTemplate& t);

// Grid-searches p_miss in {0.005..0.05} and spurious MERGE/CONV rates so the
// mean short-attack error lands in [0.5, 3] for VGG19 and [1.5, 4] for
// ResNet50; among feasible points picks the one closest to the reference
// errors (1.1, 2.3).
struct NoiseGridPoint {
  double p_miss = 0;
  double merge_rate = 0;
  double conv_rate = 0;
  double vgg19_error = 0;
  double resnet50_error = 0;
  bool feasible = false;
};

struct NoiseCalibration {
  NoiseModel chosen;
  double vgg19_error = 0;
  double resnet50_error = 0;
  std::vector<NoiseGridPoint> grid;
};

NoiseCalibration calibrate_noise(const Catalog& catalog, int seeds_per_point, uint64_t master_seed);

// Mean short-attack extraction error for one arch: `seeds` runs of ten
// independent single-query observations each.
double mean_short_attack_error(const ArchTemplate& t, const NoiseModel& noise, int seeds,
                               uint64_t master_seed);

}  // namespace tracerecon
