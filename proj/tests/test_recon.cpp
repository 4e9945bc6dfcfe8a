#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/config.hpp"
#include "tracerecon/errors.hpp"
#include "tracerecon/recon.hpp"
#include "tracerecon/rng.hpp"

#include "oracles.hpp"

using namespace tracerecon;

namespace {

Observation noiseless_obs(const ArchTemplate& t, uint64_t queries) {
  return observe(emit_trace(t, queries, TraceMode::Inference), NoiseModel::noiseless(), 0);
}

AttributeVector random_vector(Rng& rng) {
  AttributeVector v;
  for (int i = 0; i < kNumAttributes; ++i) v[i] = static_cast<double>(rng.uniform(40));
  return v;
}

}  // namespace

TEST_CASE("split_queries boundaries") {
  const Catalog c = build_catalog();
  CHECK(split_queries(noiseless_obs(c.at("ResNet50"), 10)).size() == 10);

  const auto vgg_seqs = split_queries(noiseless_obs(c.at("VGG19"), 1));
  REQUIRE(vgg_seqs.size() == 1);
  CHECK(vgg_seqs.front().size() == 62);

  Observation only_queries;
  only_queries.events = {{0, FunctionCode::Query}, {1, FunctionCode::Query}};
  const auto empty_seqs = split_queries(only_queries);
  REQUIRE(empty_seqs.size() == 2);
  CHECK(empty_seqs[0].empty());
  CHECK(empty_seqs[1].empty());

  Observation no_query;
  no_query.events = {{0, FunctionCode::Conv}};
  CHECK_THROWS_AS(split_queries(no_query), ContractError);

  // events before the first QUERY fall outside every query window
  Observation leading;
  leading.events = {{0, FunctionCode::Conv}, {1, FunctionCode::Query}, {2, FunctionCode::Relu}};
  const auto seqs = split_queries(leading);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0] == std::vector<FunctionCode>{FunctionCode::Relu});
}

TEST_CASE("extract_attributes") {
  const Catalog c = build_catalog();
  const auto vgg_seq = split_queries(noiseless_obs(c.at("VGG19"), 1)).front();
  CHECK(extract_attributes(vgg_seq) == make_attributes(16, 3, 1, 18, 5, 0, 0, 19));
  const auto rn_seq = split_queries(noiseless_obs(c.at("ResNet50"), 1)).front();
  CHECK(extract_attributes(rn_seq) == make_attributes(53, 1, 1, 49, 1, 1, 16, 50));
  CHECK(extract_attributes({}) == AttributeVector{});
  // GRAD events are ignored
  CHECK(extract_attributes({FunctionCode::Grad, FunctionCode::Conv}) ==
        make_attributes(1, 0, 0, 0, 0, 0, 0, 0));

  for (const auto& [name, t] : c) {
    CAPTURE(name);
    auto events = expand_events(t);
    events.erase(events.begin());
    CHECK(extract_attributes(events) == attributes_of(t));
  }
}

TEST_CASE("attack_report: modes, denominators, preconditions") {
  const Catalog c = build_catalog();
  const AttributeVector vgg_g = attributes_of(c.at("VGG19"));
  const AttributeVector rn_g = attributes_of(c.at("ResNet50"));

  std::vector<Observation> shorts;
  for (int i = 0; i < 10; ++i) shorts.push_back(noiseless_obs(c.at("VGG19"), 1));
  const ExtractionReport s = attack_report(shorts, 'S', &vgg_g);
  CHECK(s.per_query.size() == 10);
  CHECK(*s.error == 0.0);
  CHECK(*s.denominator == 62.0);

  const ExtractionReport l = attack_report({noiseless_obs(c.at("ResNet50"), 10)}, 'L', &rn_g);
  CHECK(l.per_query.size() == 10);
  CHECK(*l.error == 0.0);
  // the ground-truth row sums to 172 even though the published denominator
  // column prints 173
  CHECK(*l.denominator == 172.0);

  CHECK_THROWS_AS(attack_report({shorts.begin(), shorts.begin() + 9}, 'S', nullptr), ContractError);
  CHECK_THROWS_AS(attack_report({noiseless_obs(c.at("ResNet50"), 9)}, 'L', nullptr), ContractError);
  CHECK_THROWS_AS(attack_report({noiseless_obs(c.at("ResNet50"), 10)}, 'S', nullptr), ContractError);
  CHECK_THROWS_AS(attack_report(shorts, 'X', nullptr), ContractError);
}

TEST_CASE("reconstruct: VGG16 per the published block table") {
  const Catalog c = build_catalog();
  const auto seq = split_queries(noiseless_obs(c.at("VGG16"), 1)).front();
  const BlockStructure s = reconstruct(seq);
  REQUIRE(s.blocks.size() == 6);
  const int expected_convs[5] = {2, 2, 3, 3, 3};
  for (int i = 0; i < 5; ++i) {
    CHECK(s.blocks[static_cast<size_t>(i)].kind == BlockKind::ConvNet);
    CHECK(s.blocks[static_cast<size_t>(i)].convs == expected_convs[i]);
  }
  CHECK(s.blocks[5].kind == BlockKind::Classifier);
  CHECK(s.fc_tail == 3);
  CHECK(s.softmax);
}

TEST_CASE("reconstruct: ResNet50 per the published segmentation") {
  const Catalog c = build_catalog();
  const auto seq = split_queries(noiseless_obs(c.at("ResNet50"), 1)).front();
  const BlockStructure s = reconstruct(seq);
  REQUIRE(s.blocks.size() == 18);
  CHECK(s.blocks[0].kind == BlockKind::Stem);
  int residuals = 0, identities = 0;
  for (size_t i = 1; i + 1 < s.blocks.size(); ++i) {
    if (s.blocks[i].kind == BlockKind::Residual) {
      ++residuals;
      CHECK(s.blocks[i].convs == 4);
    } else {
      REQUIRE(s.blocks[i].kind == BlockKind::Identity);
      ++identities;
      CHECK(s.blocks[i].convs == 3);
    }
  }
  CHECK(residuals == 4);
  CHECK(identities == 12);
  // stage pattern: residual first, then its identities
  const std::vector<BlockKind> kinds = {
      s.blocks[1].kind, s.blocks[2].kind, s.blocks[3].kind, s.blocks[4].kind};
  CHECK(kinds == std::vector<BlockKind>{BlockKind::Residual, BlockKind::Identity,
                                        BlockKind::Identity, BlockKind::Residual});
  CHECK(s.blocks[17].kind == BlockKind::Classifier);
  CHECK(s.fc_tail == 1);
  CHECK(s.softmax);

  CHECK(reconstruct({}) == BlockStructure{});
}

TEST_CASE("reconstruct: degenerate sequences never abort") {
  // fc before any pooling classifies best-effort as a stem
  const BlockStructure s = reconstruct({FunctionCode::Fc, FunctionCode::Conv, FunctionCode::Mpool});
  REQUIRE(s.blocks.size() == 1);
  CHECK(s.blocks[0].kind == BlockKind::Stem);

  // trailing bare average pool opens an empty classifier region
  const BlockStructure tail = reconstruct({FunctionCode::Conv, FunctionCode::Merge, FunctionCode::Apool});
  REQUIRE(tail.blocks.size() == 2);
  CHECK(tail.blocks[1].kind == BlockKind::Classifier);
}

TEST_CASE("identify: noiseless round trips for the sequence-faithful templates") {
  const Catalog c = build_catalog();
  for (const std::string name : {"VGG16", "VGG19", "ResNet50", "ResNet101", "ResNet152"}) {
    CAPTURE(name);
    const auto seq = split_queries(noiseless_obs(c.at(name), 1)).front();
    const auto candidates = identify(reconstruct(seq), c);
    CHECK(candidates.front().name == name);
    CHECK(candidates.front().distance == 0);
    CHECK(candidates[1].distance > 0);
  }
}

TEST_CASE("identify: dropped conv still ranks ResNet50 first, against the brute-force oracle") {
  const Catalog c = build_catalog();
  auto seq = split_queries(noiseless_obs(c.at("ResNet50"), 1)).front();
  // drop one conv from an identity block (the conv right after the first merge)
  const auto merge_pos = std::find(seq.begin(), seq.end(), FunctionCode::Merge);
  const auto conv_pos = std::find(merge_pos, seq.end(), FunctionCode::Conv);
  seq.erase(conv_pos);
  const BlockStructure s = reconstruct(seq);
  const auto candidates = identify(s, c);
  CHECK(candidates.front().name == "ResNet50");
  CHECK(candidates.front().distance >= 1);

  // full ranking agrees with an independent recursive edit distance
  for (const Candidate& cand : candidates) {
    const BlockStructure ts = template_structure(c.at(cand.name));
    CHECK(cand.distance == oracles::edit_distance_oracle(s.blocks, ts.blocks));
  }
}

TEST_CASE("detect_freeze") {
  const Catalog c = build_catalog();
  const ArchTemplate& vgg16 = c.at("VGG16");

  auto training_obs = [&](std::optional<uint32_t> frozen) {
    return observe(emit_trace(vgg16, 5, TraceMode::Training, frozen), NoiseModel::noiseless(), 1);
  };
  const FreezeReport ft = detect_freeze(training_obs(13), vgg16);
  CHECK(ft.updated_layers == 3);
  CHECK(ft.frozen_prefix == 13);

  const FreezeReport full = detect_freeze(training_obs(std::nullopt), vgg16);
  CHECK(full.updated_layers == 16);
  CHECK(full.frozen_prefix == 0);

  const FreezeReport frozen = detect_freeze(training_obs(16), vgg16);
  CHECK(frozen.updated_layers == 0);
  CHECK(frozen.frozen_prefix == 16);

  Observation empty;
  CHECK_THROWS_AS(detect_freeze(empty, vgg16), ContractError);
}

TEST_CASE("l1_error is a metric on attribute vectors") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const AttributeVector a = random_vector(rng);
    const AttributeVector b = random_vector(rng);
    const AttributeVector c = random_vector(rng);
    CHECK(l1_error(a, a) == 0.0);
    CHECK(l1_error(a, b) >= 0.0);
    CHECK(l1_error(a, b) == l1_error(b, a));
    CHECK(l1_error(a, c) <= l1_error(a, b) + l1_error(b, c) + 1e-12);
    if (a != b) CHECK(l1_error(a, b) > 0.0);
  }
}

TEST_CASE("monotone degradation: mean error never drops as p_miss grows") {
  const Catalog c = build_catalog();
  const ArchTemplate& rn = c.at("ResNet50");
  const GroundTruthTrace t = emit_trace(rn, 1, TraceMode::Inference);
  const AttributeVector g = attributes_of(rn);

  const double p_grid[] = {0.0, 0.01, 0.02, 0.05, 0.1};
  double previous = -1.0;
  for (double p : p_grid) {
    NoiseModel noise;
    noise.p_miss = p;
    noise.set_rate(FunctionCode::Merge, 0.3);
    double total = 0;
    const int kSeeds = 400;
    for (int s = 0; s < kSeeds; ++s) {
      AttributeVector count;
      for (const TraceEvent& e : observe(t, noise, derive_seed(5, static_cast<uint64_t>(s))).events)
        if (is_attribute_code(e.code)) count[attribute_index(e.code)] += 1;
      total += l1_error(count, g);
    }
    const double mean = total / kSeeds;
    CHECK(mean >= previous - 0.1);  // one-sided tolerance
    previous = mean;
  }
}

TEST_CASE("calibrated defaults keep short-attack errors in the published bands") {
  const Catalog c = build_catalog();
  const NoiseModel noise = Defaults::builtin().noise;  // committed calibration
  const double vgg = mean_short_attack_error(c.at("VGG19"), noise, 10, 31);
  const double rn = mean_short_attack_error(c.at("ResNet50"), noise, 10, 32);
  CHECK(vgg >= 0.5);
  CHECK(vgg <= 3.0);
  CHECK(rn >= 1.5);
  CHECK(rn <= 4.0);
}
