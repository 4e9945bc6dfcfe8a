#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/codes.hpp"
#include "tracerecon/trace_engine.hpp"

namespace tracerecon {

// Attribute rows with labels. The default build holds 50 single-query
// observations per network, 650 rows total.
struct Dataset {
  std::vector<std::array<double, kNumAttributes>> features;
  std::vector<std::string> labels;
  std::string task = "all13";

  size_t size() const { return features.size(); }
};

Dataset build_dataset(const Catalog& catalog, int per_arch_n, const NoiseModel& noise,
                      uint64_t master_seed, unsigned jobs = 1);

// task: "all13", "family", or "variant:<letter>" which restricts rows to one
// family and keeps the per-network labels.
Dataset relabel(const Dataset& dataset, const std::string& task, const Catalog& catalog);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int label = -1;
  int left = -1;
  int right = -1;
};

// CART decision tree, grown with Gini impurity until nodes are pure or hold
// fewer than two samples. Split thresholds are midpoints of adjacent sorted
// unique feature values; descent goes left when value <= threshold.
struct TreeModel {
  std::vector<TreeNode> nodes;           // nodes[0] is the root
  std::vector<std::string> label_names;  // label id -> name
  uint64_t seed = 0;
  int fold = -1;

  int depth() const;
  std::string export_text() const;
};

struct CVReport {
  std::string task;
  int folds = 0;
  uint64_t seed = 0;
  std::vector<double> fold_accuracies;
  double best_accuracy = 0.0;
  double mean_accuracy = 0.0;
};

struct TrainResult {
  std::vector<TreeModel> fold_models;
  CVReport report;
};

// Stratified seeded k-fold cross-validation. folds = 1 trains and scores on
// the full dataset.
TrainResult train_tree(const Dataset& dataset, int folds, uint64_t seed);

// Fits one fully grown tree on the given rows.
TreeModel fit_tree(const std::vector<std::array<double, kNumAttributes>>& features,
                   const std::vector<int>& label_ids, const std::vector<std::string>& label_names);

std::string predict(const TreeModel& tree, const std::array<double, kNumAttributes>& features);
std::string predict(const TreeModel& tree, const AttributeVector& attrs);

// The split CART selects at one node: maximizes the Gini gain over all
// (feature, midpoint threshold) candidates with exact integer comparisons;
// ties go to the lower feature index, then the lower threshold.
struct SplitChoice {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
};

SplitChoice best_split(const std::vector<std::array<double, kNumAttributes>>& features,
                       const std::vector<int>& label_ids, const std::vector<int>& rows,
                       int n_labels);

// Plug-in discrete mutual information between each feature (values treated
// as categorical symbols) and the label, in bits, ranked descending with
// ties broken by feature index.
struct FeatureImportance {
  struct Entry {
    int feature = 0;
    double mi_bits = 0.0;
  };
  std::vector<Entry> ranked;
};

FeatureImportance mutual_information(const Dataset& dataset);

double label_entropy_bits(const Dataset& dataset);

// Symmetric eigendecomposition by cyclic Jacobi rotations (off-diagonal
// Frobenius norm below 1e-12). Pairs are returned in descending eigenvalue
// order.
struct EigenSym {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;  // vectors[k] pairs with values[k]
};

EigenSym jacobi_eigen(const std::vector<std::vector<double>>& sym);

// Covariance PCA of the 8 attribute columns: centered, unscaled. The sign
// convention makes each loading's largest-magnitude entry positive.
struct PCAResult {
  std::array<std::array<double, kNumAttributes>, kNumAttributes> loadings{};  // loadings[k] = component k
  std::array<double, kNumAttributes> eigenvalues{};                           // descending
  std::vector<std::array<double, 2>> projections;                             // rows onto PC0/PC1
  bool degenerate = false;
};

PCAResult pca(const Dataset& dataset);

// CSV with the exact header
// convs,fcs,softms,relus,mpools,apools,merges,biases,label
std::string dataset_to_csv(const Dataset& dataset);
Dataset dataset_from_csv(const std::string& text);

}  // namespace tracerecon
