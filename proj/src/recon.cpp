#include "tracerecon/recon.hpp"

#include <algorithm>
#include <cmath>

#include "tracerecon/errors.hpp"
#include "tracerecon/rng.hpp"

namespace tracerecon {

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Stem: return "stem";
    case BlockKind::ConvNet: return "convnet";
    case BlockKind::Residual: return "residual";
    case BlockKind::Identity: return "identity";
    case BlockKind::Classifier: return "classifier";
  }
  return "?";
}

std::vector<std::vector<FunctionCode>> split_queries(const Observation& obs) {
  std::vector<std::vector<FunctionCode>> sequences;
  bool inside = false;
  for (const TraceEvent& e : obs.events) {
    if (e.code == FunctionCode::Query) {
      sequences.emplace_back();
      inside = true;
      continue;
    }
    if (inside) sequences.back().push_back(e.code);
  }
  if (sequences.empty()) throw ContractError("split_queries: empty observation (no QUERY events)");
  return sequences;
}

AttributeVector extract_attributes(const std::vector<FunctionCode>& query_seq) {
  AttributeVector a;
  for (FunctionCode c : query_seq) {
    if (is_attribute_code(c)) a[attribute_index(c)] += 1;
  }
  return a;
}

ExtractionReport attack_report(const std::vector<Observation>& observations, char mode,
                               const AttributeVector* ground_truth) {
  ExtractionReport report;
  report.mode = mode;

  std::vector<std::vector<FunctionCode>> sequences;
  if (mode == 'S') {
    if (observations.size() < 10)
      throw ContractError("attack_report: short attack requires >= 10 single-query observations");
    for (const Observation& obs : observations) {
      auto seqs = split_queries(obs);
      if (seqs.size() != 1)
        throw ContractError("attack_report: short attack observations must hold exactly one query");
      sequences.push_back(std::move(seqs.front()));
    }
    report.arch = observations.front().provenance_arch;
  } else if (mode == 'L') {
    if (observations.size() != 1)
      throw ContractError("attack_report: long attack takes exactly one observation");
    sequences = split_queries(observations.front());
    if (sequences.size() < 10)
      throw ContractError("attack_report: long attack requires >= 10 consecutive queries");
    report.arch = observations.front().provenance_arch;
  } else {
    throw ContractError("attack_report: mode must be 'S' or 'L'");
  }

  for (const auto& seq : sequences) report.per_query.push_back(extract_attributes(seq));
  for (const AttributeVector& v : report.per_query)
    for (int i = 0; i < kNumAttributes; ++i) report.mean[i] += v[i];
  for (int i = 0; i < kNumAttributes; ++i)
    report.mean[i] /= static_cast<double>(report.per_query.size());

  if (ground_truth) {
    report.ground_truth = *ground_truth;
    report.error = l1_error(report.mean, *ground_truth);
    report.denominator = ground_truth->sum();
  }
  return report;
}

namespace {

struct Segment {
  int convs = 0;
  int fcs = 0;
  bool softmax = false;
  FunctionCode boundary = FunctionCode::Query;  // Query marks the trailing segment
};

}  // namespace

BlockStructure reconstruct(const std::vector<FunctionCode>& query_seq) {
  std::vector<Segment> segments;
  Segment current;
  for (FunctionCode c : query_seq) {
    switch (c) {
      case FunctionCode::Conv: current.convs += 1; break;
      case FunctionCode::Fc: current.fcs += 1; break;
      case FunctionCode::Softm: current.softmax = true; break;
      case FunctionCode::Mpool:
      case FunctionCode::Apool:
      case FunctionCode::Merge:
        current.boundary = c;
        segments.push_back(current);
        current = Segment{};
        break;
      default: break;  // BIAS absorbs into the op; RELU/GRAD/QUERY carry no block info
    }
  }
  const bool has_trailing = current.convs > 0 || current.fcs > 0 || current.softmax;
  if (has_trailing) segments.push_back(current);

  BlockStructure out;
  std::vector<FunctionCode> boundaries;
  for (size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.boundary == FunctionCode::Merge) {
      out.blocks.push_back({s.convs >= 4 ? BlockKind::Residual : BlockKind::Identity, s.convs});
    } else if (s.boundary == FunctionCode::Mpool || s.boundary == FunctionCode::Apool) {
      if (s.fcs > 0) {
        out.blocks.push_back({BlockKind::Stem, s.convs});  // degenerate: fc before pooling
      } else if (out.blocks.empty() && s.convs == 1) {
        out.blocks.push_back({BlockKind::Stem, 1});
      } else {
        out.blocks.push_back({BlockKind::ConvNet, s.convs});
      }
    } else {
      // Trailing region: the classifier head.
      out.fc_tail = s.fcs;
      out.softmax = s.softmax;
      // A bare average-pool directly before the head is the global pooling
      // of the classifier, not a block of its own.
      if (!out.blocks.empty() && boundaries.back() == FunctionCode::Apool &&
          out.blocks.back().kind == BlockKind::ConvNet && out.blocks.back().convs == 0) {
        out.blocks.pop_back();
        boundaries.pop_back();
      }
      out.blocks.push_back({BlockKind::Classifier, s.fcs});
      boundaries.push_back(FunctionCode::Query);
      continue;
    }
    boundaries.push_back(s.boundary);
  }

  // Sequence ended on a bare average-pool with no head behind it: still the
  // start of a classifier region.
  if (!has_trailing && !out.blocks.empty() && boundaries.back() == FunctionCode::Apool &&
      out.blocks.back().kind == BlockKind::ConvNet && out.blocks.back().convs == 0) {
    out.blocks.back() = {BlockKind::Classifier, 0};
  }
  return out;
}

BlockStructure template_structure(const ArchTemplate& t) {
  std::vector<FunctionCode> events = expand_events(t);
  events.erase(events.begin());  // drop the QUERY marker
  return reconstruct(events);
}

int signature_distance(const BlockStructure& a, const BlockStructure& b) {
  const auto& x = a.blocks;
  const auto& y = b.blocks;
  std::vector<int> prev(y.size() + 1);
  std::vector<int> row(y.size() + 1);
  for (size_t j = 0; j <= y.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= x.size(); ++i) {
    row[0] = static_cast<int>(i);
    for (size_t j = 1; j <= y.size(); ++j) {
      const int sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      row[j] = std::min({prev[j] + 1, row[j - 1] + 1, sub});
    }
    std::swap(prev, row);
  }
  return prev[y.size()];
}

std::vector<Candidate> identify(const BlockStructure& structure, const Catalog& catalog) {
  if (catalog.empty()) throw ContractError("identify: catalog is empty");
  std::vector<Candidate> candidates;
  candidates.reserve(catalog.size());
  for (const auto& [name, t] : catalog)
    candidates.push_back({name, signature_distance(structure, template_structure(t))});
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.name < b.name;
  });
  return candidates;
}

FreezeReport detect_freeze(const Observation& training_obs, const ArchTemplate& t) {
  const auto sequences = split_queries(training_obs);
  uint64_t grads = 0;
  for (const auto& seq : sequences)
    for (FunctionCode c : seq)
      if (c == FunctionCode::Grad) ++grads;

  FreezeReport report;
  report.mean_grads_per_query = static_cast<double>(grads) / static_cast<double>(sequences.size());
  report.updated_layers = static_cast<int>(std::llround(report.mean_grads_per_query));
  report.frozen_prefix = std::max(0, bias_layer_count(t) - report.updated_layers);
  return report;
}

double mean_short_attack_error(const ArchTemplate& t, const NoiseModel& noise, int seeds,
                               uint64_t master_seed) {
  const GroundTruthTrace trace = emit_trace(t, 1, TraceMode::Inference);
  const AttributeVector truth = attributes_of(t);
  double total = 0;
  for (int s = 0; s < seeds; ++s) {
    std::vector<Observation> observations;
    observations.reserve(10);
    for (int i = 0; i < 10; ++i)
      observations.push_back(observe(trace, noise, derive_seed(master_seed, static_cast<uint64_t>(s),
                                                               static_cast<uint64_t>(i))));
    total += *attack_report(observations, 'S', &truth).error;
  }
  return total / seeds;
}

NoiseCalibration calibrate_noise(const Catalog& catalog, int seeds_per_point, uint64_t master_seed) {
  const ArchTemplate& vgg19 = catalog.at("VGG19");
  const ArchTemplate& resnet50 = catalog.at("ResNet50");

  NoiseCalibration result;
  double best_score = 0;
  bool have_best = false;
  for (int pi = 1; pi <= 10; ++pi) {
    const double p_miss = 0.005 * pi;
    for (double merge_rate : {0.1, 0.3, 0.5, 0.7}) {
      for (double conv_rate : {0.0, 0.2, 0.4, 0.6}) {
        NoiseModel noise;
        noise.p_miss = p_miss;
        noise.set_rate(FunctionCode::Merge, merge_rate);
        noise.set_rate(FunctionCode::Conv, conv_rate);

        NoiseGridPoint point;
        point.p_miss = p_miss;
        point.merge_rate = merge_rate;
        point.conv_rate = conv_rate;
        point.vgg19_error = mean_short_attack_error(vgg19, noise, seeds_per_point,
                                                    derive_seed(master_seed, 1));
        point.resnet50_error = mean_short_attack_error(resnet50, noise, seeds_per_point,
                                                       derive_seed(master_seed, 2));
        point.feasible = point.vgg19_error >= 0.5 && point.vgg19_error <= 3.0 &&
                         point.resnet50_error >= 1.5 && point.resnet50_error <= 4.0;
        result.grid.push_back(point);

        if (!point.feasible) continue;
        const double score =
            std::fabs(point.vgg19_error - 1.1) + std::fabs(point.resnet50_error - 2.3);
        if (!have_best || score < best_score) {
          have_best = true;
          best_score = score;
          result.chosen = noise;
          result.vgg19_error = point.vgg19_error;
          result.resnet50_error = point.resnet50_error;
        }
      }
    }
  }
  if (!have_best) throw ContractError("calibrate_noise: no feasible grid point");
  return result;
}

}  // namespace tracerecon
