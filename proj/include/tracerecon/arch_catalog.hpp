#pragma once

#include <map>
#include <string>
#include <vector>

#include "tracerecon/codes.hpp"

namespace tracerecon {

enum class LayerKind : uint8_t { Conv, Fc, MaxPool, AvgPool, Merge };
enum class Activation : uint8_t { None, Relu, Softmax };

const char* to_string(LayerKind kind);
const char* to_string(Activation act);

struct LayerDesc {
  LayerKind kind = LayerKind::Conv;
  Activation activation = Activation::None;
  bool has_bias = false;

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct Block {
  std::string label;  // stem | convnet-n | residual | identity | dense | inception-like | classifier
  std::vector<LayerDesc> layers;

  friend bool operator==(const Block&, const Block&) = default;
};

// One of the thirteen networks, described as ordered blocks of layers. The
// VGG and ResNet templates reproduce the exact per-query computation
// sequence; the others reproduce the per-query attribute counts with a
// structurally plausible layer order.
struct ArchTemplate {
  std::string name;
  char family = '?';  // V | R | D | I | M
  std::vector<Block> blocks;

  friend bool operator==(const ArchTemplate&, const ArchTemplate&) = default;
};

using Catalog = std::map<std::string, ArchTemplate>;

// Kept sorted so iteration order matches Catalog iteration order.
const std::vector<std::string>& catalog_names();

// Builds the fixed catalog of 13 templates. Repeated calls return identical
// catalogs.
Catalog build_catalog();

// Counts layer kinds and activations: relus = layers activated with relu,
// softms = softmax activations, biases = layers carrying a bias.
AttributeVector attributes_of(const ArchTemplate& t);

// Expands one inference query into its monitored-function event sequence:
// one QUERY, then per layer the layer op, BIAS if biased, then the
// activation event if any.
std::vector<FunctionCode> expand_events(const ArchTemplate& t);

// Expansion of a bare layer list (no QUERY event). Used for decoy streams.
void expand_layers(const std::vector<LayerDesc>& layers, std::vector<FunctionCode>& out);

// Number of bias-carrying layers, in template order. Defines both the GRAD
// emission count in training traces and the freeze-point arithmetic.
int bias_layer_count(const ArchTemplate& t);

// Throws ContractError if a template violates the layer invariants
// (pool/merge layers must be bias-free, softmax only on the final fc).
void validate_template(const ArchTemplate& t);

// JSON interchange document ("format": 1) with templates and their
// ground-truth attribute vectors. Import of the exported text yields an
// identical catalog; malformed input raises DataError naming the position.
std::string export_catalog(const Catalog& catalog);
Catalog import_catalog(const std::string& text);

}  // namespace tracerecon
