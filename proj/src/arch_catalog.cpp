#include "tracerecon/arch_catalog.hpp"

#include <nlohmann/json.hpp>

#include "tracerecon/errors.hpp"

namespace tracerecon {

namespace {

using nlohmann::json;

LayerDesc conv_relu(bool bias = false) { return {LayerKind::Conv, Activation::Relu, bias}; }
LayerDesc conv(bool bias = false) { return {LayerKind::Conv, Activation::None, bias}; }
LayerDesc fc_relu() { return {LayerKind::Fc, Activation::Relu, true}; }
LayerDesc fc_softmax(bool bias = true) { return {LayerKind::Fc, Activation::Softmax, bias}; }
LayerDesc maxpool() { return {LayerKind::MaxPool, Activation::None, false}; }
LayerDesc avgpool() { return {LayerKind::AvgPool, Activation::None, false}; }
LayerDesc merge(Activation act = Activation::None) { return {LayerKind::Merge, act, false}; }

Block convnet_block(int convs) {
  Block b{"convnet-" + std::to_string(convs), {}};
  for (int i = 0; i < convs; ++i) b.layers.push_back(conv_relu(true));
  b.layers.push_back(maxpool());
  return b;
}

ArchTemplate make_vgg(const std::string& name, const std::vector<int>& stage_convs) {
  ArchTemplate t{name, 'V', {}};
  for (int n : stage_convs) t.blocks.push_back(convnet_block(n));
  t.blocks.push_back({"classifier", {fc_relu(), fc_relu(), fc_softmax()}});
  return t;
}

// Bottleneck residual block: three biased main-path convs plus the unbiased
// projection shortcut, joined by a relu-activated merge (C_R C_R C C M_R).
Block residual_block() {
  return {"residual", {conv_relu(true), conv_relu(true), conv(true), conv(false), merge(Activation::Relu)}};
}

Block identity_block() {
  return {"identity", {conv_relu(true), conv_relu(true), conv(true), merge(Activation::Relu)}};
}

ArchTemplate make_resnet(const std::string& name, const std::vector<int>& stage_blocks,
                         bool stem_relu) {
  ArchTemplate t{name, 'R', {}};
  t.blocks.push_back({"stem", {stem_relu ? conv_relu(true) : conv(true), maxpool()}});
  for (int blocks : stage_blocks) {
    t.blocks.push_back(residual_block());
    for (int i = 1; i < blocks; ++i) t.blocks.push_back(identity_block());
  }
  t.blocks.push_back({"classifier", {avgpool(), fc_softmax()}});
  return t;
}

// Dense block of `pairs` two-conv units, each closed by a concatenation
// merge. The very last merge of the network carries the final relu.
Block dense_block(int pairs, bool final_relu) {
  Block b{"dense", {}};
  for (int i = 0; i < pairs; ++i) {
    b.layers.push_back(conv_relu(false));
    b.layers.push_back(conv_relu(false));
    bool last = final_relu && i + 1 == pairs;
    b.layers.push_back(merge(last ? Activation::Relu : Activation::None));
  }
  return b;
}

ArchTemplate make_densenet(const std::string& name, const std::vector<int>& stage_pairs) {
  ArchTemplate t{name, 'D', {}};
  t.blocks.push_back({"stem", {conv_relu(false), maxpool()}});
  for (size_t s = 0; s < stage_pairs.size(); ++s) {
    bool last_stage = s + 1 == stage_pairs.size();
    t.blocks.push_back(dense_block(stage_pairs[s], last_stage));
    if (!last_stage) t.blocks.push_back({"dense", {conv_relu(false), avgpool()}});
  }
  t.blocks.push_back({"classifier", {fc_softmax()}});
  return t;
}

// Inception-style module: branch convs (relu_convs activated, linear_convs
// not), an optional pooling branch, then `merges` concatenations.
Block inception_module(int relu_convs, int linear_convs, int mpools, int apools, int merges) {
  Block b{"inception-like", {}};
  for (int i = 0; i < relu_convs; ++i) b.layers.push_back(conv_relu(false));
  for (int i = 0; i < linear_convs; ++i) b.layers.push_back(conv(false));
  for (int i = 0; i < mpools; ++i) b.layers.push_back(maxpool());
  for (int i = 0; i < apools; ++i) b.layers.push_back(avgpool());
  for (int i = 0; i < merges; ++i) b.layers.push_back(merge());
  return b;
}

ArchTemplate make_inception_v3() {
  ArchTemplate t{"InceptionV3", 'I', {}};
  t.blocks.push_back({"stem", {conv_relu(false), conv_relu(false), conv_relu(false), maxpool(),
                               conv_relu(false), conv_relu(false), maxpool()}});
  for (int i = 0; i < 3; ++i) t.blocks.push_back(inception_module(7, 0, 0, 1, 1));
  t.blocks.push_back(inception_module(4, 0, 1, 0, 1));  // grid reduction
  for (int i = 0; i < 4; ++i) t.blocks.push_back(inception_module(7, 3, 0, 1, 1));
  t.blocks.push_back(inception_module(6, 0, 1, 0, 1));  // grid reduction
  for (int i = 0; i < 2; ++i) t.blocks.push_back(inception_module(6, 3, 0, 1, 3));
  t.blocks.push_back({"classifier", {fc_softmax()}});
  return t;
}

// Residual inception block: activated branch convs, a branch concatenation,
// the biased linear projection conv, and the residual add.
Block inception_residual_block(int branch_convs) {
  Block b{"inception-like", {}};
  for (int i = 0; i < branch_convs; ++i) b.layers.push_back(conv_relu(false));
  b.layers.push_back(merge());
  b.layers.push_back(conv(true));
  b.layers.push_back(merge());
  return b;
}

ArchTemplate make_inception_resnet() {
  ArchTemplate t{"InceptionResNet", 'I', {}};
  t.blocks.push_back({"stem", {conv_relu(false), conv_relu(false), conv_relu(false), maxpool(),
                               conv_relu(false), conv_relu(false), maxpool()}});
  t.blocks.push_back(inception_module(6, 1, 0, 1, 1));
  for (int i = 0; i < 10; ++i) t.blocks.push_back(inception_residual_block(6));
  t.blocks.push_back(inception_module(4, 0, 1, 0, 1));
  for (int i = 0; i < 20; ++i) t.blocks.push_back(inception_residual_block(4));
  t.blocks.push_back(inception_module(7, 0, 1, 0, 1));
  for (int i = 0; i < 10; ++i) t.blocks.push_back(inception_residual_block(4));
  t.blocks.push_back({"inception-like", {conv_relu(false)}});
  t.blocks.push_back({"classifier", {fc_softmax(false)}});
  return t;
}

// Separable-conv block with an unactivated shortcut conv feeding the merge.
Block xception_block(int sep_convs, bool pool) {
  Block b{"inception-like", {}};
  for (int i = 0; i < sep_convs; ++i) b.layers.push_back(conv_relu(false));
  if (pool) b.layers.push_back(maxpool());
  b.layers.push_back(conv(false));
  b.layers.push_back(merge());
  return b;
}

ArchTemplate make_xception() {
  ArchTemplate t{"Xception", 'I', {}};
  t.blocks.push_back({"stem", {conv_relu(false), conv_relu(false), conv(false)}});
  for (int i = 0; i < 3; ++i) t.blocks.push_back(xception_block(2, true));
  for (int i = 0; i < 8; ++i) {
    t.blocks.push_back({"inception-like",
                        {conv_relu(false), conv_relu(false), conv_relu(false), merge()}});
  }
  t.blocks.push_back(xception_block(2, true));
  t.blocks.push_back({"inception-like", {conv_relu(false), conv_relu(false)}});
  t.blocks.push_back({"classifier", {fc_softmax()}});
  return t;
}

// Depthwise stages are invoked through a cwise kernel rather than the conv
// entry point, so they surface as a merge-carried relu with no conv event.
LayerDesc depthwise(bool relu = true) {
  return {LayerKind::Merge, relu ? Activation::Relu : Activation::None, false};
}

ArchTemplate make_mobilenet_v1() {
  ArchTemplate t{"MobileNetV1", 'M', {}};
  t.blocks.push_back({"stem", {conv_relu(false)}});
  for (int i = 0; i < 13; ++i) {
    t.blocks.push_back({"inception-like", {depthwise(), conv_relu(false)}});
  }
  t.blocks.push_back({"classifier", {conv(true)}});
  return t;
}

ArchTemplate make_mobilenet_v2() {
  ArchTemplate t{"MobileNetV2", 'M', {}};
  t.blocks.push_back({"stem", {conv_relu(false)}});
  t.blocks.push_back({"inception-like", {depthwise(false), conv(false)}});
  // Inverted residual blocks; the ones flagged true end in a residual add.
  const bool has_add[16] = {false, true,  false, true, true,  false, true, true,
                            true,  false, true,  true, false, true,  true, false};
  for (bool add : has_add) {
    Block b{"inception-like", {conv_relu(false), depthwise(), conv(false)}};
    if (add) b.layers.push_back(merge());
    t.blocks.push_back(b);
  }
  t.blocks.push_back({"inception-like", {conv_relu(false)}});
  t.blocks.push_back({"classifier", {fc_softmax()}});
  return t;
}

json layer_to_json(const LayerDesc& l) {
  return json{{"kind", to_string(l.kind)},
              {"activation", to_string(l.activation)},
              {"has_bias", l.has_bias}};
}

LayerDesc layer_from_json(const json& j) {
  LayerDesc l;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv") l.kind = LayerKind::Conv;
  else if (kind == "fc") l.kind = LayerKind::Fc;
  else if (kind == "maxpool") l.kind = LayerKind::MaxPool;
  else if (kind == "avgpool") l.kind = LayerKind::AvgPool;
  else if (kind == "merge") l.kind = LayerKind::Merge;
  else throw DataError("unknown layer kind '" + kind + "'");
  const std::string act = j.at("activation").get<std::string>();
  if (act == "none") l.activation = Activation::None;
  else if (act == "relu") l.activation = Activation::Relu;
  else if (act == "softmax") l.activation = Activation::Softmax;
  else throw DataError("unknown activation '" + act + "'");
  l.has_bias = j.at("has_bias").get<bool>();
  return l;
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Fc: return "fc";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Merge: return "merge";
  }
  return "?";
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {
      "DenseNet121", "DenseNet169", "DenseNet201", "InceptionResNet", "InceptionV3",
      "MobileNetV1", "MobileNetV2", "ResNet101",   "ResNet152",       "ResNet50",
      "VGG16",       "VGG19",       "Xception"};
  return names;
}

Catalog build_catalog() {
  Catalog c;
  auto put = [&c](ArchTemplate t) {
    validate_template(t);
    c.emplace(t.name, std::move(t));
  };
  put(make_vgg("VGG16", {2, 2, 3, 3, 3}));
  put(make_vgg("VGG19", {2, 2, 4, 4, 4}));
  put(make_resnet("ResNet50", {3, 4, 6, 3}, true));
  put(make_resnet("ResNet101", {3, 4, 22, 3}, true));
  put(make_resnet("ResNet152", {3, 8, 36, 3}, false));
  put(make_densenet("DenseNet121", {6, 12, 24, 16}));
  put(make_densenet("DenseNet169", {6, 12, 32, 32}));
  put(make_densenet("DenseNet201", {6, 12, 48, 32}));
  put(make_inception_v3());
  put(make_inception_resnet());
  put(make_xception());
  put(make_mobilenet_v1());
  put(make_mobilenet_v2());
  return c;
}

AttributeVector attributes_of(const ArchTemplate& t) {
  AttributeVector a;
  for (const Block& b : t.blocks) {
    for (const LayerDesc& l : b.layers) {
      switch (l.kind) {
        case LayerKind::Conv: a.convs() += 1; break;
        case LayerKind::Fc: a.fcs() += 1; break;
        case LayerKind::MaxPool: a.mpools() += 1; break;
        case LayerKind::AvgPool: a.apools() += 1; break;
        case LayerKind::Merge: a.merges() += 1; break;
      }
      if (l.activation == Activation::Relu) a.relus() += 1;
      if (l.activation == Activation::Softmax) a.softms() += 1;
      if (l.has_bias) a.biases() += 1;
    }
  }
  return a;
}

void expand_layers(const std::vector<LayerDesc>& layers, std::vector<FunctionCode>& out) {
  for (const LayerDesc& l : layers) {
    switch (l.kind) {
      case LayerKind::Conv: out.push_back(FunctionCode::Conv); break;
      case LayerKind::Fc: out.push_back(FunctionCode::Fc); break;
      case LayerKind::MaxPool: out.push_back(FunctionCode::Mpool); break;
      case LayerKind::AvgPool: out.push_back(FunctionCode::Apool); break;
      case LayerKind::Merge: out.push_back(FunctionCode::Merge); break;
    }
    if (l.has_bias) out.push_back(FunctionCode::Bias);
    if (l.activation == Activation::Relu) out.push_back(FunctionCode::Relu);
    if (l.activation == Activation::Softmax) out.push_back(FunctionCode::Softm);
  }
}

std::vector<FunctionCode> expand_events(const ArchTemplate& t) {
  std::vector<FunctionCode> events;
  events.push_back(FunctionCode::Query);
  for (const Block& b : t.blocks) expand_layers(b.layers, events);
  return events;
}

int bias_layer_count(const ArchTemplate& t) {
  int n = 0;
  for (const Block& b : t.blocks)
    for (const LayerDesc& l : b.layers)
      if (l.has_bias) ++n;
  return n;
}

void validate_template(const ArchTemplate& t) {
  const LayerDesc* last_softmax = nullptr;
  const LayerDesc* last_layer = nullptr;
  for (const Block& b : t.blocks) {
    for (const LayerDesc& l : b.layers) {
      if (l.has_bias &&
          (l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool || l.kind == LayerKind::Merge)) {
        throw ContractError("template '" + t.name + "': pooling/merge layer cannot carry a bias");
      }
      if (l.activation == Activation::Softmax) {
        if (l.kind != LayerKind::Fc)
          throw ContractError("template '" + t.name + "': softmax allowed only on fc layers");
        if (last_softmax)
          throw ContractError("template '" + t.name + "': multiple softmax layers");
        last_softmax = &l;
      }
      last_layer = &l;
    }
  }
  if (last_softmax && last_softmax != last_layer)
    throw ContractError("template '" + t.name + "': softmax must be the final layer");
}

std::string export_catalog(const Catalog& catalog) {
  json doc;
  doc["format"] = 1;
  json templates = json::array();
  for (const auto& [name, t] : catalog) {
    json jt;
    jt["name"] = t.name;
    jt["family"] = std::string(1, t.family);
    json blocks = json::array();
    for (const Block& b : t.blocks) {
      json jb;
      jb["label"] = b.label;
      json layers = json::array();
      for (const LayerDesc& l : b.layers) layers.push_back(layer_to_json(l));
      jb["layers"] = std::move(layers);
      blocks.push_back(std::move(jb));
    }
    jt["blocks"] = std::move(blocks);
    const AttributeVector g = attributes_of(t);
    json jg;
    for (int i = 0; i < kNumAttributes; ++i) jg[AttributeVector::kFieldNames[static_cast<size_t>(i)]] = g[i];
    jt["ground_truth"] = std::move(jg);
    templates.push_back(std::move(jt));
  }
  doc["templates"] = std::move(templates);
  return doc.dump(2) + "\n";
}

Catalog import_catalog(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("catalog parse error: ") + e.what());
  }
  try {
    if (doc.at("format").get<int>() != 1) throw DataError("unsupported catalog format version");
    Catalog c;
    for (const json& jt : doc.at("templates")) {
      ArchTemplate t;
      t.name = jt.at("name").get<std::string>();
      const std::string fam = jt.at("family").get<std::string>();
      if (fam.size() != 1) throw DataError("family must be a single letter");
      t.family = fam[0];
      for (const json& jb : jt.at("blocks")) {
        Block b;
        b.label = jb.at("label").get<std::string>();
        for (const json& jl : jb.at("layers")) b.layers.push_back(layer_from_json(jl));
        t.blocks.push_back(std::move(b));
      }
      validate_template(t);
      if (jt.contains("ground_truth")) {
        AttributeVector stored;
        for (int i = 0; i < kNumAttributes; ++i)
          stored[i] = jt.at("ground_truth").at(AttributeVector::kFieldNames[static_cast<size_t>(i)]).get<double>();
        if (stored != attributes_of(t))
          throw DataError("catalog entry '" + t.name + "': stored ground truth disagrees with template");
      }
      c.emplace(t.name, std::move(t));
    }
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("catalog structure error: ") + e.what());
  }
}

}  // namespace tracerecon
