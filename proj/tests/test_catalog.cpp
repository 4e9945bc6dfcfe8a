#include <doctest.h>

#include <map>
#include <set>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/errors.hpp"

using namespace tracerecon;

namespace {

AttributeVector count_codes(const std::vector<FunctionCode>& events) {
  AttributeVector a;
  for (FunctionCode c : events)
    if (is_attribute_code(c)) a[attribute_index(c)] += 1;
  return a;
}

}  // namespace

TEST_CASE("catalog holds the 13 fixed networks with the right family partition") {
  const Catalog c = build_catalog();
  REQUIRE(c.size() == 13);
  const std::map<std::string, char> expected_families = {
      {"VGG16", 'V'},       {"VGG19", 'V'},       {"ResNet50", 'R'},       {"ResNet101", 'R'},
      {"ResNet152", 'R'},   {"DenseNet121", 'D'}, {"DenseNet169", 'D'},    {"DenseNet201", 'D'},
      {"InceptionV3", 'I'}, {"Xception", 'I'},    {"InceptionResNet", 'I'}, {"MobileNetV1", 'M'},
      {"MobileNetV2", 'M'}};
  for (const auto& [name, family] : expected_families) {
    REQUIRE(c.count(name) == 1);
    CHECK(c.at(name).family == family);
  }
  CHECK(build_catalog() == c);  // repeated builds identical

  size_t i = 0;
  for (const auto& [name, t] : c) CHECK(name == catalog_names()[i++]);
}

TEST_CASE("ground-truth attribute vectors match the published rows exactly") {
  const Catalog c = build_catalog();
  // (convs, fcs, softms, relus, mpools, apools, merges, biases)
  CHECK(attributes_of(c.at("VGG19")) == make_attributes(16, 3, 1, 18, 5, 0, 0, 19));
  CHECK(attributes_of(c.at("ResNet50")) == make_attributes(53, 1, 1, 49, 1, 1, 16, 50));
  CHECK(attributes_of(c.at("VGG16")) == make_attributes(13, 3, 1, 15, 5, 0, 0, 16));
  CHECK(attributes_of(c.at("DenseNet121")) == make_attributes(120, 1, 1, 121, 1, 3, 58, 1));
  CHECK(attributes_of(c.at("DenseNet169")) == make_attributes(168, 1, 1, 169, 1, 3, 82, 1));
  CHECK(attributes_of(c.at("DenseNet201")) == make_attributes(200, 1, 1, 201, 1, 3, 98, 1));
  CHECK(attributes_of(c.at("InceptionV3")) == make_attributes(94, 1, 1, 76, 4, 9, 15, 1));
  CHECK(attributes_of(c.at("InceptionResNet")) == make_attributes(244, 1, 1, 203, 4, 1, 83, 40));

  // The published merge counts for these three and the bias counts for the
  // deep ResNets are inconsistent or absent; those fields carry
  // catalog-chosen values and are excluded here.
  auto check_except = [](const AttributeVector& got, const AttributeVector& want,
                         const std::set<int>& skip) {
    for (int i = 0; i < kNumAttributes; ++i) {
      if (skip.count(i)) continue;
      CHECK(got[i] == want[i]);
    }
  };
  const int kMerges = 6, kBiases = 7;
  check_except(attributes_of(c.at("ResNet101")), make_attributes(101, 1, 1, 97, 1, 1, 32, 0),
               {kBiases});
  check_except(attributes_of(c.at("ResNet152")), make_attributes(155, 1, 1, 150, 1, 1, 50, 0),
               {kBiases});
  check_except(attributes_of(c.at("Xception")), make_attributes(41, 1, 1, 36, 4, 0, 0, 1),
               {kMerges});
  check_except(attributes_of(c.at("MobileNetV1")), make_attributes(15, 0, 0, 27, 0, 0, 0, 1),
               {kMerges});
  check_except(attributes_of(c.at("MobileNetV2")), make_attributes(35, 1, 1, 34, 0, 0, 0, 1),
               {kMerges});
}

TEST_CASE("attributes_of counts layers, activations, biases") {
  ArchTemplate empty{"empty", 'V', {}};
  CHECK(attributes_of(empty) == AttributeVector{});

  ArchTemplate tiny{"tiny", 'V',
                    {{"classifier", {{LayerKind::Fc, Activation::Softmax, true}}}}};
  CHECK(attributes_of(tiny) == make_attributes(0, 1, 1, 0, 0, 0, 0, 1));
  CHECK(expand_events(tiny) ==
        std::vector<FunctionCode>{FunctionCode::Query, FunctionCode::Fc, FunctionCode::Bias,
                                  FunctionCode::Softm});
}

TEST_CASE("expansion self-consistency: code counts reproduce attributes_of") {
  for (const auto& [name, t] : build_catalog()) {
    CAPTURE(name);
    auto events = expand_events(t);
    REQUIRE(events.front() == FunctionCode::Query);
    CHECK(count_codes(events) == attributes_of(t));
    CHECK(std::count(events.begin(), events.end(), FunctionCode::Query) == 1);
    CHECK(std::count(events.begin(), events.end(), FunctionCode::Grad) == 0);
  }
}

TEST_CASE("sequence-faithful openings for the reconstruction targets") {
  const Catalog c = build_catalog();
  using FC = FunctionCode;
  // VGG16 starts C_R C_R P (bias events interleave after each op)
  const auto vgg = expand_events(c.at("VGG16"));
  const std::vector<FC> vgg_head = {FC::Query, FC::Conv, FC::Bias, FC::Relu,
                                    FC::Conv,  FC::Bias, FC::Relu, FC::Mpool};
  REQUIRE(vgg.size() >= vgg_head.size());
  CHECK(std::equal(vgg_head.begin(), vgg_head.end(), vgg.begin()));

  // ResNet50 stem is C_R P_M, then the first residual C_R C_R C C M_R
  const auto rn = expand_events(c.at("ResNet50"));
  const std::vector<FC> rn_head = {FC::Query, FC::Conv, FC::Bias, FC::Relu, FC::Mpool,
                                   FC::Conv,  FC::Bias, FC::Relu,
                                   FC::Conv,  FC::Bias, FC::Relu,
                                   FC::Conv,  FC::Bias,
                                   FC::Conv,
                                   FC::Merge, FC::Relu};
  REQUIRE(rn.size() >= rn_head.size());
  CHECK(std::equal(rn_head.begin(), rn_head.end(), rn.begin()));
}

TEST_CASE("layer invariants hold for every template") {
  for (const auto& [name, t] : build_catalog()) {
    CAPTURE(name);
    CHECK_NOTHROW(validate_template(t));
    for (const Block& b : t.blocks) {
      for (const LayerDesc& l : b.layers) {
        if (l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool ||
            l.kind == LayerKind::Merge)
          CHECK_FALSE(l.has_bias);
      }
    }
  }
  ArchTemplate bad{"bad", 'V', {{"stem", {{LayerKind::MaxPool, Activation::None, true}}}}};
  CHECK_THROWS_AS(validate_template(bad), ContractError);
  ArchTemplate bad2{"bad2", 'V',
                    {{"classifier",
                      {{LayerKind::Fc, Activation::Softmax, true},
                       {LayerKind::Fc, Activation::Relu, true}}}}};
  CHECK_THROWS_AS(validate_template(bad2), ContractError);
}

TEST_CASE("catalog export/import round trip") {
  const Catalog c = build_catalog();
  const std::string doc = export_catalog(c);
  CHECK(import_catalog(doc) == c);

  // Exported VGG19 entry carries its ground-truth vector.
  const size_t vgg_pos = doc.find("\"name\": \"VGG19\"");
  REQUIRE(vgg_pos != std::string::npos);
  const size_t gt_pos = doc.rfind("\"ground_truth\"", vgg_pos);
  REQUIRE(gt_pos != std::string::npos);
  const std::string gt_block = doc.substr(gt_pos, doc.find('}', gt_pos) - gt_pos);
  CHECK(gt_block.find("\"convs\": 16") != std::string::npos);
  CHECK(gt_block.find("\"relus\": 18") != std::string::npos);
  CHECK(gt_block.find("\"biases\": 19") != std::string::npos);

  SUBCASE("truncated document fails to parse with a position") {
    const std::string truncated = doc.substr(0, doc.size() / 2);
    CHECK_THROWS_AS(import_catalog(truncated), DataError);
    try {
      import_catalog(truncated);
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
  SUBCASE("tampered ground truth is rejected") {
    std::string tampered = doc;
    const size_t pos = tampered.find("\"convs\": 16");
    REQUIRE(pos != std::string::npos);
    tampered.replace(pos, 11, "\"convs\": 17");
    CHECK_THROWS_AS(import_catalog(tampered), DataError);
  }
}
