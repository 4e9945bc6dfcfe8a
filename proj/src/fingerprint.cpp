#include "tracerecon/fingerprint.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "tracerecon/errors.hpp"
#include "tracerecon/parallel.hpp"
#include "tracerecon/recon.hpp"
#include "tracerecon/rng.hpp"

namespace tracerecon {

Dataset build_dataset(const Catalog& catalog, int per_arch_n, const NoiseModel& noise,
                      uint64_t master_seed, unsigned jobs) {
  if (per_arch_n < 1) throw ContractError("build_dataset: per_arch_n must be >= 1");

  std::vector<const ArchTemplate*> templates;
  std::vector<GroundTruthTrace> traces;
  for (const auto& [name, t] : catalog) {
    templates.push_back(&t);
    traces.push_back(emit_trace(t, 1, TraceMode::Inference));
  }

  Dataset ds;
  ds.task = "all13";
  const size_t total = templates.size() * static_cast<size_t>(per_arch_n);
  ds.features.resize(total);
  ds.labels.resize(total);

  parallel_for_index(total, jobs, [&](size_t i) {
    const size_t arch = i / static_cast<size_t>(per_arch_n);
    const size_t rep = i % static_cast<size_t>(per_arch_n);
    const Observation obs = observe(traces[arch], noise, derive_seed(master_seed, arch, rep));
    const auto sequences = split_queries(obs);
    ds.features[i] = extract_attributes(sequences.front()).v;
    ds.labels[i] = templates[arch]->name;
  });
  return ds;
}

Dataset relabel(const Dataset& dataset, const std::string& task, const Catalog& catalog) {
  std::map<std::string, char> family_of;
  for (const auto& [name, t] : catalog) family_of[name] = t.family;

  Dataset out;
  out.task = task;
  if (task == "all13") {
    out.features = dataset.features;
    out.labels = dataset.labels;
    return out;
  }
  if (task == "family") {
    out.features = dataset.features;
    out.labels.reserve(dataset.labels.size());
    for (const std::string& name : dataset.labels) {
      auto it = family_of.find(name);
      if (it == family_of.end()) throw ContractError("relabel: unknown network '" + name + "'");
      out.labels.emplace_back(1, it->second);
    }
    return out;
  }
  if (task.rfind("variant:", 0) == 0 && task.size() == 9) {
    const char family = task[8];
    for (size_t i = 0; i < dataset.size(); ++i) {
      auto it = family_of.find(dataset.labels[i]);
      if (it == family_of.end()) throw ContractError("relabel: unknown network '" + dataset.labels[i] + "'");
      if (it->second != family) continue;
      out.features.push_back(dataset.features[i]);
      out.labels.push_back(dataset.labels[i]);
    }
    if (out.features.empty())
      throw ContractError(std::string("relabel: no rows for family '") + family + "'");
    return out;
  }
  throw ContractError("relabel: unknown task '" + task + "' (use all13, family, variant:<letter>)");
}

namespace {

// Gini gain comparison without floating point: a split maximizing
//   sum_c l_c^2 / L + sum_c r_c^2 / R
// minimizes the weighted Gini impurity. Scores compare as exact fractions.
struct SplitScore {
  long long numer = -1;  // a*R + b*L
  long long denom = 1;   // L*R

  static SplitScore from_counts(long long a, long long b, long long left, long long right) {
    return {a * right + b * left, left * right};
  }

  bool better_than(const SplitScore& o) const {
    return static_cast<__int128>(numer) * o.denom > static_cast<__int128>(o.numer) * denom;
  }
};

int majority_label(const std::vector<int>& label_ids, const std::vector<int>& rows, int n_labels) {
  std::vector<int> counts(static_cast<size_t>(n_labels), 0);
  for (int r : rows) counts[static_cast<size_t>(label_ids[static_cast<size_t>(r)])] += 1;
  int best = 0;
  for (int c = 1; c < n_labels; ++c)
    if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(best)]) best = c;
  return best;
}

bool is_pure(const std::vector<int>& label_ids, const std::vector<int>& rows) {
  for (size_t i = 1; i < rows.size(); ++i)
    if (label_ids[static_cast<size_t>(rows[i])] != label_ids[static_cast<size_t>(rows[0])]) return false;
  return true;
}

}  // namespace

SplitChoice best_split(const std::vector<std::array<double, kNumAttributes>>& features,
                       const std::vector<int>& label_ids, const std::vector<int>& rows,
                       int n_labels) {
  SplitChoice choice;
  SplitScore best_score;
  const long long n = static_cast<long long>(rows.size());
  if (n < 2) return choice;

  std::vector<int> order(rows);
  std::vector<long long> left_counts(static_cast<size_t>(n_labels));
  std::vector<long long> right_counts(static_cast<size_t>(n_labels));

  for (int f = 0; f < kNumAttributes; ++f) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return features[static_cast<size_t>(a)][static_cast<size_t>(f)] <
             features[static_cast<size_t>(b)][static_cast<size_t>(f)];
    });

    std::fill(left_counts.begin(), left_counts.end(), 0);
    std::fill(right_counts.begin(), right_counts.end(), 0);
    for (int r : order) right_counts[static_cast<size_t>(label_ids[static_cast<size_t>(r)])] += 1;

    long long left_sq = 0;   // sum of squared left label counts
    long long right_sq = 0;  // sum of squared right label counts
    for (long long c : right_counts) right_sq += c * c;

    for (long long i = 0; i < n - 1; ++i) {
      const int row = order[static_cast<size_t>(i)];
      const int label = label_ids[static_cast<size_t>(row)];
      left_sq += 2 * left_counts[static_cast<size_t>(label)] + 1;
      right_sq -= 2 * right_counts[static_cast<size_t>(label)] - 1;
      left_counts[static_cast<size_t>(label)] += 1;
      right_counts[static_cast<size_t>(label)] -= 1;

      const double lo = features[static_cast<size_t>(order[static_cast<size_t>(i)])][static_cast<size_t>(f)];
      const double hi = features[static_cast<size_t>(order[static_cast<size_t>(i + 1)])][static_cast<size_t>(f)];
      if (lo == hi) continue;
      const SplitScore score = SplitScore::from_counts(left_sq, right_sq, i + 1, n - i - 1);
      if (!choice.valid || score.better_than(best_score)) {
        choice.valid = true;
        choice.feature = f;
        choice.threshold = (lo + hi) / 2.0;
        best_score = score;
      }
    }
  }
  return choice;
}

TreeModel fit_tree(const std::vector<std::array<double, kNumAttributes>>& features,
                   const std::vector<int>& label_ids, const std::vector<std::string>& label_names) {
  TreeModel tree;
  tree.label_names = label_names;
  const int n_labels = static_cast<int>(label_names.size());

  std::vector<int> all_rows(label_ids.size());
  for (size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);

  struct Work {
    int node;
    std::vector<int> rows;
  };
  tree.nodes.push_back({});
  std::vector<Work> stack{{0, std::move(all_rows)}};
  while (!stack.empty()) {
    Work work = std::move(stack.back());
    stack.pop_back();
    TreeNode& node = tree.nodes[static_cast<size_t>(work.node)];

    if (work.rows.size() < 2 || is_pure(label_ids, work.rows)) {
      node.label = majority_label(label_ids, work.rows, n_labels);
      continue;
    }
    const SplitChoice split = best_split(features, label_ids, work.rows, n_labels);
    if (!split.valid) {  // identical feature rows with mixed labels
      node.label = majority_label(label_ids, work.rows, n_labels);
      continue;
    }
    std::vector<int> left_rows, right_rows;
    for (int r : work.rows) {
      if (features[static_cast<size_t>(r)][static_cast<size_t>(split.feature)] <= split.threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    const int left = node.left, right = node.right;
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    stack.push_back({right, std::move(right_rows)});
    stack.push_back({left, std::move(left_rows)});
  }
  return tree;
}

int TreeModel::depth() const {
  if (nodes.empty()) return 0;
  int max_depth = 0;
  struct Item {
    int node, depth;
  };
  std::vector<Item> stack{{0, 1}};
  while (!stack.empty()) {
    Item item = stack.back();
    stack.pop_back();
    const TreeNode& n = nodes[static_cast<size_t>(item.node)];
    max_depth = std::max(max_depth, item.depth);
    if (n.feature >= 0) {
      stack.push_back({n.left, item.depth + 1});
      stack.push_back({n.right, item.depth + 1});
    }
  }
  return max_depth;
}

std::string TreeModel::export_text() const {
  std::string out;
  struct Item {
    int node, indent;
  };
  std::vector<Item> stack{{0, 0}};
  while (!stack.empty()) {
    Item item = stack.back();
    stack.pop_back();
    const TreeNode& n = nodes[static_cast<size_t>(item.node)];
    out.append(static_cast<size_t>(item.indent) * 2, ' ');
    if (n.feature < 0) {
      out += "leaf label=";
      out += label_names[static_cast<size_t>(n.label)];
      out += '\n';
    } else {
      out += "node feature=";
      out += AttributeVector::kFieldNames[static_cast<size_t>(n.feature)];
      out += " threshold=";
      out += format_double(n.threshold);
      out += '\n';
      stack.push_back({n.right, item.indent + 1});
      stack.push_back({n.left, item.indent + 1});
    }
  }
  return out;
}

std::string predict(const TreeModel& tree, const std::array<double, kNumAttributes>& features) {
  if (tree.nodes.empty()) throw ContractError("predict: empty tree");
  int node = 0;
  while (tree.nodes[static_cast<size_t>(node)].feature >= 0) {
    const TreeNode& n = tree.nodes[static_cast<size_t>(node)];
    node = features[static_cast<size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return tree.label_names[static_cast<size_t>(tree.nodes[static_cast<size_t>(node)].label)];
}

std::string predict(const TreeModel& tree, const AttributeVector& attrs) {
  return predict(tree, attrs.v);
}

namespace {

std::vector<std::string> sorted_unique_labels(const Dataset& ds) {
  std::set<std::string> names(ds.labels.begin(), ds.labels.end());
  return {names.begin(), names.end()};
}

std::vector<int> label_ids_of(const Dataset& ds, const std::vector<std::string>& names) {
  std::vector<int> ids;
  ids.reserve(ds.labels.size());
  for (const std::string& l : ds.labels) {
    const auto it = std::lower_bound(names.begin(), names.end(), l);
    ids.push_back(static_cast<int>(it - names.begin()));
  }
  return ids;
}

}  // namespace

TrainResult train_tree(const Dataset& dataset, int folds, uint64_t seed) {
  if (dataset.size() == 0) throw ContractError("train_tree: empty dataset");
  if (folds < 1) throw ContractError("train_tree: folds must be >= 1");
  const std::vector<std::string> names = sorted_unique_labels(dataset);
  const std::vector<int> ids = label_ids_of(dataset, names);

  TrainResult result;
  result.report.task = dataset.task;
  result.report.folds = folds;
  result.report.seed = seed;

  if (folds == 1) {
    TreeModel tree = fit_tree(dataset.features, ids, names);
    tree.seed = seed;
    tree.fold = 0;
    int correct = 0;
    for (size_t i = 0; i < dataset.size(); ++i)
      if (predict(tree, dataset.features[i]) == dataset.labels[i]) ++correct;
    const double acc = static_cast<double>(correct) / static_cast<double>(dataset.size());
    result.fold_models.push_back(std::move(tree));
    result.report.fold_accuracies = {acc};
    result.report.best_accuracy = acc;
    result.report.mean_accuracy = acc;
    return result;
  }

  // Stratified fold assignment: per label, a seeded shuffle dealt
  // round-robin across folds.
  std::vector<int> fold_of(dataset.size(), 0);
  for (size_t label = 0; label < names.size(); ++label) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == static_cast<int>(label)) rows.push_back(i);
    if (rows.size() < static_cast<size_t>(folds))
      throw ContractError("train_tree: label '" + names[label] + "' has fewer rows than folds");
    Rng rng(derive_seed(seed, label));
    rng.shuffle(rows.data(), rows.size());
    for (size_t j = 0; j < rows.size(); ++j) fold_of[rows[j]] = static_cast<int>(j % static_cast<size_t>(folds));
  }

  for (int f = 0; f < folds; ++f) {
    std::vector<std::array<double, kNumAttributes>> train_x;
    std::vector<int> train_y;
    for (size_t i = 0; i < dataset.size(); ++i) {
      if (fold_of[i] == f) continue;
      train_x.push_back(dataset.features[i]);
      train_y.push_back(ids[i]);
    }
    TreeModel tree = fit_tree(train_x, train_y, names);
    tree.seed = seed;
    tree.fold = f;

    int correct = 0, total = 0;
    for (size_t i = 0; i < dataset.size(); ++i) {
      if (fold_of[i] != f) continue;
      ++total;
      if (predict(tree, dataset.features[i]) == dataset.labels[i]) ++correct;
    }
    result.report.fold_accuracies.push_back(total == 0 ? 0.0
                                                       : static_cast<double>(correct) / total);
    result.fold_models.push_back(std::move(tree));
  }
  result.report.best_accuracy =
      *std::max_element(result.report.fold_accuracies.begin(), result.report.fold_accuracies.end());
  double sum = 0;
  for (double a : result.report.fold_accuracies) sum += a;
  result.report.mean_accuracy = sum / static_cast<double>(folds);
  return result;
}

double label_entropy_bits(const Dataset& dataset) {
  std::map<std::string, size_t> counts;
  for (const std::string& l : dataset.labels) counts[l] += 1;
  const double n = static_cast<double>(dataset.size());
  double h = 0;
  for (const auto& [label, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

FeatureImportance mutual_information(const Dataset& dataset) {
  std::vector<std::string> names = sorted_unique_labels(dataset);
  if (names.size() < 2) throw ContractError("mutual_information: needs >= 2 labels");
  const std::vector<int> ids = label_ids_of(dataset, names);
  const double n = static_cast<double>(dataset.size());

  std::vector<double> label_marginal(names.size(), 0);
  for (int id : ids) label_marginal[static_cast<size_t>(id)] += 1;

  FeatureImportance importance;
  for (int f = 0; f < kNumAttributes; ++f) {
    std::map<double, double> value_marginal;
    std::map<std::pair<double, int>, double> joint;
    for (size_t i = 0; i < dataset.size(); ++i) {
      const double x = dataset.features[i][static_cast<size_t>(f)];
      value_marginal[x] += 1;
      joint[{x, ids[i]}] += 1;
    }
    double mi = 0;
    for (const auto& [key, nxy] : joint) {
      const double px = value_marginal[key.first] / n;
      const double py = label_marginal[static_cast<size_t>(key.second)] / n;
      const double pxy = nxy / n;
      mi += pxy * std::log2(pxy / (px * py));
    }
    importance.ranked.push_back({f, mi});
  }
  std::stable_sort(importance.ranked.begin(), importance.ranked.end(),
                   [](const FeatureImportance::Entry& a, const FeatureImportance::Entry& b) {
                     return a.mi_bits != b.mi_bits ? a.mi_bits > b.mi_bits : a.feature < b.feature;
                   });
  return importance;
}

EigenSym jacobi_eigen(const std::vector<std::vector<double>>& sym) {
  const size_t n = sym.size();
  std::vector<std::vector<double>> a = sym;
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  auto off_norm = [&a, n] {
    double s = 0;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = 0; q < n; ++q)
        if (p != q) s += a[p][q] * a[p][q];
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && off_norm() >= 1e-12; ++sweep) {
    for (size_t p = 0; p + 1 < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&a](size_t x, size_t y) { return a[x][x] > a[y][y]; });

  EigenSym out;
  out.values.resize(n);
  out.vectors.assign(n, std::vector<double>(n));
  for (size_t k = 0; k < n; ++k) {
    out.values[k] = a[order[k]][order[k]];
    for (size_t i = 0; i < n; ++i) out.vectors[k][i] = v[i][order[k]];
  }
  return out;
}

PCAResult pca(const Dataset& dataset) {
  const size_t n = dataset.size();
  if (n < 2) throw ContractError("pca: needs >= 2 rows");

  std::array<double, kNumAttributes> mean{};
  for (const auto& row : dataset.features)
    for (int f = 0; f < kNumAttributes; ++f) mean[static_cast<size_t>(f)] += row[static_cast<size_t>(f)];
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<std::vector<double>> cov(kNumAttributes, std::vector<double>(kNumAttributes, 0.0));
  for (const auto& row : dataset.features) {
    for (int i = 0; i < kNumAttributes; ++i) {
      const double di = row[static_cast<size_t>(i)] - mean[static_cast<size_t>(i)];
      for (int j = i; j < kNumAttributes; ++j) {
        cov[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
            di * (row[static_cast<size_t>(j)] - mean[static_cast<size_t>(j)]);
      }
    }
  }
  for (int i = 0; i < kNumAttributes; ++i)
    for (int j = i; j < kNumAttributes; ++j) {
      cov[static_cast<size_t>(i)][static_cast<size_t>(j)] /= static_cast<double>(n - 1);
      cov[static_cast<size_t>(j)][static_cast<size_t>(i)] = cov[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }

  const EigenSym eig = jacobi_eigen(cov);

  PCAResult result;
  result.degenerate = true;
  for (int k = 0; k < kNumAttributes; ++k) {
    result.eigenvalues[static_cast<size_t>(k)] = eig.values[static_cast<size_t>(k)];
    if (std::fabs(eig.values[static_cast<size_t>(k)]) > 1e-12) result.degenerate = false;
    // Sign convention: the largest-magnitude loading entry is positive.
    size_t arg = 0;
    for (size_t i = 1; i < kNumAttributes; ++i)
      if (std::fabs(eig.vectors[static_cast<size_t>(k)][i]) >
          std::fabs(eig.vectors[static_cast<size_t>(k)][arg]))
        arg = i;
    const double sign = eig.vectors[static_cast<size_t>(k)][arg] < 0 ? -1.0 : 1.0;
    for (size_t i = 0; i < kNumAttributes; ++i)
      result.loadings[static_cast<size_t>(k)][i] = sign * eig.vectors[static_cast<size_t>(k)][i];
  }

  result.projections.reserve(n);
  for (const auto& row : dataset.features) {
    std::array<double, 2> p{};
    for (int k = 0; k < 2; ++k) {
      double dot = 0;
      for (int f = 0; f < kNumAttributes; ++f)
        dot += (row[static_cast<size_t>(f)] - mean[static_cast<size_t>(f)]) *
               result.loadings[static_cast<size_t>(k)][static_cast<size_t>(f)];
      p[static_cast<size_t>(k)] = dot;
    }
    result.projections.push_back(p);
  }
  return result;
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::string out = "convs,fcs,softms,relus,mpools,apools,merges,biases,label\n";
  for (size_t i = 0; i < dataset.size(); ++i) {
    for (int f = 0; f < kNumAttributes; ++f) {
      out += format_double(dataset.features[i][static_cast<size_t>(f)]);
      out += ',';
    }
    out += dataset.labels[i];
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  Dataset ds;
  size_t begin = 0;
  size_t line_no = 0;
  bool saw_header = false;
  while (begin < text.size()) {
    size_t end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + begin, end - begin);
    ++line_no;
    begin = end + 1;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "convs,fcs,softms,relus,mpools,apools,merges,biases,label")
        throw DataError("line " + std::to_string(line_no) + ": bad dataset header");
      saw_header = true;
      continue;
    }
    std::array<double, kNumAttributes> row{};
    size_t pos = 0;
    for (int f = 0; f < kNumAttributes; ++f) {
      const size_t comma = line.find(',', pos);
      if (comma == std::string_view::npos)
        throw DataError("line " + std::to_string(line_no) + ": expected 9 comma-separated fields");
      double value = 0;
      auto [p, ec] = std::from_chars(line.data() + pos, line.data() + comma, value);
      if (ec != std::errc() || p != line.data() + comma)
        throw DataError("line " + std::to_string(line_no) + ": bad numeric field");
      row[static_cast<size_t>(f)] = value;
      pos = comma + 1;
    }
    if (pos >= line.size())
      throw DataError("line " + std::to_string(line_no) + ": missing label field");
    ds.features.push_back(row);
    ds.labels.emplace_back(line.substr(pos));
  }
  if (!saw_header) throw DataError("dataset csv: missing header line");
  return ds;
}

}  // namespace tracerecon
