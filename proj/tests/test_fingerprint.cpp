#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/config.hpp"
#include "tracerecon/errors.hpp"
#include "tracerecon/fingerprint.hpp"
#include "tracerecon/rng.hpp"

#include "oracles.hpp"

using namespace tracerecon;

namespace {

Dataset noiseless_default(uint64_t seed = 7) {
  return build_dataset(build_catalog(), 50, NoiseModel::noiseless(), seed);
}

}  // namespace

// ------------------------------------------------------------------ dataset

TEST_CASE("build_dataset sizes and determinism") {
  const Catalog c = build_catalog();
  const Dataset ds = build_dataset(c, 50, Defaults::builtin().noise, 11);
  CHECK(ds.size() == 650);
  std::map<std::string, int> per_label;
  for (const std::string& l : ds.labels) per_label[l] += 1;
  CHECK(per_label.size() == 13);
  for (const auto& [label, n] : per_label) CHECK(n == 50);

  CHECK(build_dataset(c, 1, Defaults::builtin().noise, 11).size() == 13);
  CHECK_THROWS_AS(build_dataset(c, 0, NoiseModel::noiseless(), 1), ContractError);

  SUBCASE("identical master seeds give identical datasets") {
    const Dataset again = build_dataset(c, 50, Defaults::builtin().noise, 11);
    CHECK(again.features == ds.features);
    CHECK(again.labels == ds.labels);
    const Dataset other = build_dataset(c, 50, Defaults::builtin().noise, 12);
    CHECK(other.features != ds.features);
  }
  SUBCASE("worker count does not change the result") {
    const Dataset parallel = build_dataset(c, 50, Defaults::builtin().noise, 11, 8);
    CHECK(parallel.features == ds.features);
    CHECK(parallel.labels == ds.labels);
  }
}

TEST_CASE("noiseless dataset rows equal the ground-truth vectors") {
  const Catalog c = build_catalog();
  const Dataset ds = noiseless_default();
  for (size_t i = 0; i < ds.size(); ++i) {
    const AttributeVector g = attributes_of(c.at(ds.labels[i]));
    CHECK(ds.features[i] == g.v);
  }
}

TEST_CASE("relabel tasks") {
  const Catalog c = build_catalog();
  const Dataset ds = noiseless_default();

  const Dataset family = relabel(ds, "family", c);
  std::set<std::string> fams(family.labels.begin(), family.labels.end());
  CHECK(fams == std::set<std::string>{"V", "R", "D", "I", "M"});

  const Dataset variants_r = relabel(ds, "variant:R", c);
  CHECK(variants_r.size() == 150);
  std::set<std::string> rs(variants_r.labels.begin(), variants_r.labels.end());
  CHECK(rs == std::set<std::string>{"ResNet50", "ResNet101", "ResNet152"});

  // MobileNet and MobileNetV2 sit in one family with two variant labels
  const Dataset variants_m = relabel(ds, "variant:M", c);
  CHECK(variants_m.size() == 100);
  std::set<std::string> ms(variants_m.labels.begin(), variants_m.labels.end());
  CHECK(ms == std::set<std::string>{"MobileNetV1", "MobileNetV2"});

  CHECK_THROWS_AS(relabel(ds, "variant:Z", c), ContractError);
  CHECK_THROWS_AS(relabel(ds, "bogus", c), ContractError);
}

// --------------------------------------------------------------------- CART

TEST_CASE("train_tree: noiseless datasets separate perfectly") {
  const Catalog c = build_catalog();
  const Dataset ds = noiseless_default();
  for (const std::string task : {"all13", "family", "variant:V", "variant:R", "variant:D",
                                 "variant:I", "variant:M"}) {
    CAPTURE(task);
    const TrainResult r = train_tree(relabel(ds, task, c), 5, 3);
    CHECK(r.report.best_accuracy == 1.0);
    CHECK(r.report.mean_accuracy == 1.0);
    CHECK(r.fold_models.size() == 5);
  }
}

TEST_CASE("predict: ground-truth vectors classify to their networks") {
  const Catalog c = build_catalog();
  const TrainResult r = train_tree(noiseless_default(), 5, 3);
  const TreeModel& tree = r.fold_models.front();
  CHECK(predict(tree, attributes_of(c.at("VGG19"))) == "VGG19");
  CHECK(predict(tree, attributes_of(c.at("ResNet50"))) == "ResNet50");
  for (const auto& [name, t] : c) CHECK(predict(tree, attributes_of(t)) == name);
}

TEST_CASE("train_tree: degenerate datasets") {
  Dataset single;
  single.task = "all13";
  for (int i = 0; i < 10; ++i) {
    single.features.push_back({double(i), 0, 0, 0, 0, 0, 0, 0});
    single.labels.push_back("only");
  }
  const TrainResult r = train_tree(single, 5, 1);
  CHECK(r.report.best_accuracy == 1.0);
  CHECK(r.report.mean_accuracy == 1.0);

  Dataset one_each;
  one_each.features = {{1, 0, 0, 0, 0, 0, 0, 0}, {2, 0, 0, 0, 0, 0, 0, 0}};
  one_each.labels = {"a", "b"};
  const TrainResult memorized = train_tree(one_each, 1, 1);
  CHECK(memorized.report.best_accuracy == 1.0);

  CHECK_THROWS_AS(train_tree(one_each, 2, 1), ContractError);  // stratification infeasible

  Dataset empty;
  CHECK_THROWS_AS(train_tree(empty, 5, 1), ContractError);
}

TEST_CASE("train_tree: identical rows with mixed labels fall back to majority leaves") {
  Dataset ds;
  for (int i = 0; i < 6; ++i) {
    ds.features.push_back({1, 1, 1, 1, 1, 1, 1, 1});
    ds.labels.push_back(i < 4 ? "big" : "small");
  }
  const TrainResult r = train_tree(ds, 1, 0);
  CHECK(r.fold_models.front().nodes.size() == 1);
  CHECK(r.report.best_accuracy == doctest::Approx(4.0 / 6.0));
  // any vector lands on a single-leaf tree's label
  CHECK(predict(r.fold_models.front(), std::array<double, kNumAttributes>{9, 9, 9, 9, 9, 9, 9, 9}) ==
        "big");
}

TEST_CASE("fully grown trees reach training accuracy 1.0 on distinct rows") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::array<double, kNumAttributes>> seen;
    Dataset ds;
    for (int i = 0; i < 30; ++i) {
      std::array<double, kNumAttributes> row{};
      do {
        for (auto& v : row) v = static_cast<double>(rng.uniform(8));
      } while (seen.count(row));
      seen.insert(row);
      ds.features.push_back(row);
      ds.labels.push_back(rng.uniform(3) == 0 ? "a" : (rng.uniform(2) == 0 ? "b" : "c"));
    }
    const TrainResult r = train_tree(ds, 1, 9);
    CHECK(r.report.best_accuracy == 1.0);
  }
}

TEST_CASE("best_split matches the brute-force oracle exactly on random instances") {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform(40));
    const int n_labels = 2 + static_cast<int>(rng.uniform(3));
    std::vector<std::array<double, kNumAttributes>> x;
    std::vector<int> y;
    std::vector<int> rows;
    for (int i = 0; i < n; ++i) {
      std::array<double, kNumAttributes> row{};
      for (auto& v : row) v = static_cast<double>(rng.uniform(6));
      x.push_back(row);
      y.push_back(static_cast<int>(rng.uniform(uint64_t(n_labels))));
      rows.push_back(i);
    }
    const SplitChoice got = best_split(x, y, rows, n_labels);
    const SplitChoice want = oracles::split_oracle(x, y, rows, n_labels);
    CHECK(got.valid == want.valid);
    if (got.valid) {
      CHECK(got.feature == want.feature);
      CHECK(got.threshold == want.threshold);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("tree export renders every split and leaf deterministically") {
  const TrainResult r = train_tree(noiseless_default(), 5, 3);
  const std::string text = r.fold_models.front().export_text();
  CHECK(text.find("node feature=") != std::string::npos);
  CHECK(text.find("leaf label=VGG19") != std::string::npos);
  const TrainResult again = train_tree(noiseless_default(), 5, 3);
  CHECK(again.fold_models.front().export_text() == text);
  CHECK(again.report.fold_accuracies == r.report.fold_accuracies);
}

// ----------------------------------------------------------------------- MI

TEST_CASE("mutual information examples") {
  Dataset ds;
  for (int i = 0; i < 12; ++i) {
    const int label = i % 3;
    // feature 0 constant; feature 1 equals the label index; feature 2 independent
    ds.features.push_back({5.0, double(label), double(i % 2), 0, 0, 0, 0, 0});
    ds.labels.push_back(std::string(1, char('a' + label)));
  }
  const FeatureImportance fi = mutual_information(ds);
  std::map<int, double> by_feature;
  for (const auto& e : fi.ranked) by_feature[e.feature] = e.mi_bits;
  CHECK(by_feature[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(by_feature[1] == doctest::Approx(label_entropy_bits(ds)));  // perfect predictor
  CHECK(by_feature[2] == doctest::Approx(0.0).epsilon(1e-12));

  Dataset single;
  single.features = {{1, 0, 0, 0, 0, 0, 0, 0}};
  single.labels = {"x"};
  CHECK_THROWS_AS(mutual_information(single), ContractError);
}

TEST_CASE("MI matches the joint-histogram oracle and respects its bounds") {
  Rng rng(31337);
  int instances = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Dataset ds;
    const int n = 10 + static_cast<int>(rng.uniform(90));
    for (int i = 0; i < n; ++i) {
      std::array<double, kNumAttributes> row{};
      for (auto& v : row) v = static_cast<double>(rng.uniform(5));
      ds.features.push_back(row);
      ds.labels.push_back(std::string(1, char('a' + rng.uniform(3))));
    }
    std::set<std::string> distinct(ds.labels.begin(), ds.labels.end());
    if (distinct.size() < 2) continue;
    ++instances;
    const FeatureImportance fi = mutual_information(ds);
    const double h_label = label_entropy_bits(ds);
    for (const auto& e : fi.ranked) {
      CHECK(e.mi_bits == doctest::Approx(oracles::mi_oracle(ds, e.feature)).epsilon(1e-9));
      CHECK(e.mi_bits >= -1e-9);
      CHECK(e.mi_bits <= h_label + 1e-9);
    }
    for (size_t i = 1; i < fi.ranked.size(); ++i)
      CHECK(fi.ranked[i - 1].mi_bits >= fi.ranked[i].mi_bits - 1e-12);
  }
  CHECK(instances >= 35);
}

TEST_CASE("calibrated 13-way dataset ranks the published key attributes on top") {
  const Dataset ds = build_dataset(build_catalog(), 50, Defaults::builtin().noise, 4);
  const FeatureImportance fi = mutual_information(ds);
  const std::set<int> allowed = {0, 3, 6, 7};  // convs, relus, merges, biases
  for (int i = 0; i < 3; ++i) {
    CAPTURE(fi.ranked[size_t(i)].feature);
    CHECK(allowed.count(fi.ranked[size_t(i)].feature) == 1);
  }
}

// ---------------------------------------------------------------------- PCA

TEST_CASE("pca: noiseless default dataset loads convs, relus, merges on PC0") {
  const PCAResult p = pca(noiseless_default());
  std::vector<int> order(kNumAttributes);
  for (int i = 0; i < kNumAttributes; ++i) order[size_t(i)] = i;
  std::sort(order.begin(), order.end(), [&p](int a, int b) {
    return std::fabs(p.loadings[0][size_t(a)]) > std::fabs(p.loadings[0][size_t(b)]);
  });
  const std::set<int> top3(order.begin(), order.begin() + 3);
  CHECK(top3 == std::set<int>{0, 3, 6});  // convs, relus, merges
  CHECK_FALSE(p.degenerate);
}

TEST_CASE("pca: data along (1,1) gives the symmetric first component") {
  Dataset ds;
  for (int i = 0; i < 20; ++i) {
    const double t = static_cast<double>(i);
    ds.features.push_back({t, t, 0, 0, 0, 0, 0, 0});
    ds.labels.push_back("x");
  }
  const PCAResult p = pca(ds);
  CHECK(p.loadings[0][0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  CHECK(p.loadings[0][1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  for (int f = 2; f < kNumAttributes; ++f)
    CHECK(p.loadings[0][size_t(f)] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("jacobi eigenpairs match the cubic-formula oracle on random 3x3 instances") {
  Rng rng(909);
  for (int accepted = 0; accepted < 120; ++accepted) {
    // A = Q D Q^T with separated diagonal, built from three Givens rotations.
    std::array<double, 3> d;
    d[0] = 1.0 + rng.next_double() * 4.0;
    d[1] = d[0] + 0.5 + rng.next_double() * 3.0;
    d[2] = d[1] + 0.5 + rng.next_double() * 3.0;
    std::vector<std::vector<double>> q(3, std::vector<double>(3, 0.0));
    q[0][0] = q[1][1] = q[2][2] = 1.0;
    for (int axis = 0; axis < 3; ++axis) {
      const double angle = rng.next_double() * 2.0 * M_PI;
      const int i = axis, j = (axis + 1) % 3;
      for (int k = 0; k < 3; ++k) {
        const double qi = q[size_t(k)][size_t(i)];
        const double qj = q[size_t(k)][size_t(j)];
        q[size_t(k)][size_t(i)] = std::cos(angle) * qi - std::sin(angle) * qj;
        q[size_t(k)][size_t(j)] = std::sin(angle) * qi + std::cos(angle) * qj;
      }
    }
    std::vector<std::vector<double>> a(3, std::vector<double>(3, 0.0));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          a[size_t(i)][size_t(j)] += q[size_t(i)][size_t(k)] * d[size_t(k)] * q[size_t(j)][size_t(k)];

    const EigenSym eig = jacobi_eigen(a);
    const std::array<double, 3> oracle = oracles::cubic_eigenvalues(a);
    for (int k = 0; k < 3; ++k) {
      CHECK(eig.values[size_t(k)] == doctest::Approx(oracle[size_t(k)]).epsilon(1e-9));
      const auto v = oracles::null_vector(a, oracle[size_t(k)]);
      double dot = 0;
      for (int i = 0; i < 3; ++i) dot += v[size_t(i)] * eig.vectors[size_t(k)][size_t(i)];
      CHECK(std::fabs(dot) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("pca reconstruction, orthonormality and trace identities") {
  Rng rng(555);
  Dataset ds;
  for (int i = 0; i < 60; ++i) {
    std::array<double, kNumAttributes> row{};
    for (auto& v : row) v = static_cast<double>(rng.uniform(30)) + rng.next_double();
    ds.features.push_back(row);
    ds.labels.push_back("r");
  }
  const PCAResult p = pca(ds);

  for (int i = 0; i < kNumAttributes; ++i) {
    for (int j = 0; j < kNumAttributes; ++j) {
      double dot = 0;
      for (int f = 0; f < kNumAttributes; ++f)
        dot += p.loadings[size_t(i)][size_t(f)] * p.loadings[size_t(j)][size_t(f)];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
  }

  std::array<double, kNumAttributes> mean{};
  for (const auto& row : ds.features)
    for (int f = 0; f < kNumAttributes; ++f) mean[size_t(f)] += row[size_t(f)];
  for (auto& m : mean) m /= static_cast<double>(ds.size());
  double trace = 0;
  for (int f = 0; f < kNumAttributes; ++f) {
    double var = 0;
    for (const auto& row : ds.features) {
      const double dv = row[size_t(f)] - mean[size_t(f)];
      var += dv * dv;
    }
    trace += var / static_cast<double>(ds.size() - 1);
  }
  double sum = 0;
  for (int k = 0; k < kNumAttributes; ++k) {
    CHECK(p.eigenvalues[size_t(k)] >= -1e-9);
    if (k) CHECK(p.eigenvalues[size_t(k - 1)] >= p.eigenvalues[size_t(k)] - 1e-12);
    sum += p.eigenvalues[size_t(k)];
  }
  CHECK(sum == doctest::Approx(trace).epsilon(1e-9));

  // projecting on all 8 components and inverting reproduces the centered rows
  for (const auto& row : ds.features) {
    std::array<double, kNumAttributes> centered{};
    for (int f = 0; f < kNumAttributes; ++f) centered[size_t(f)] = row[size_t(f)] - mean[size_t(f)];
    std::array<double, kNumAttributes> rebuilt{};
    for (int k = 0; k < kNumAttributes; ++k) {
      double score = 0;
      for (int f = 0; f < kNumAttributes; ++f) score += centered[size_t(f)] * p.loadings[size_t(k)][size_t(f)];
      for (int f = 0; f < kNumAttributes; ++f) rebuilt[size_t(f)] += score * p.loadings[size_t(k)][size_t(f)];
    }
    for (int f = 0; f < kNumAttributes; ++f)
      CHECK(std::fabs(rebuilt[size_t(f)] - centered[size_t(f)]) <= 1e-9);
  }

  SUBCASE("zero-variance dataset flags degenerate") {
    Dataset flat;
    for (int i = 0; i < 5; ++i) {
      flat.features.push_back({3, 3, 3, 3, 3, 3, 3, 3});
      flat.labels.push_back("x");
    }
    const PCAResult dp = pca(flat);
    CHECK(dp.degenerate);
    for (double v : dp.eigenvalues) CHECK(std::fabs(v) <= 1e-12);
  }
  SUBCASE("too few rows rejected") {
    Dataset tiny;
    tiny.features = {{1, 2, 3, 4, 5, 6, 7, 8}};
    tiny.labels = {"x"};
    CHECK_THROWS_AS(pca(tiny), ContractError);
  }
}

// ---------------------------------------------------------------------- CSV

TEST_CASE("dataset CSV round trip with the pinned header") {
  const Dataset ds = build_dataset(build_catalog(), 2, Defaults::builtin().noise, 9);
  const std::string csv = dataset_to_csv(ds);
  CHECK(csv.rfind("convs,fcs,softms,relus,mpools,apools,merges,biases,label\n", 0) == 0);
  const Dataset parsed = dataset_from_csv(csv);
  CHECK(parsed.features == ds.features);
  CHECK(parsed.labels == ds.labels);
  CHECK(dataset_to_csv(parsed) == csv);

  CHECK_THROWS_AS(dataset_from_csv("wrong,header\n1,2\n"), DataError);
  CHECK_THROWS_AS(dataset_from_csv("convs,fcs,softms,relus,mpools,apools,merges,biases,label\n1,2\n"),
                  DataError);
}
