#include "tracerecon/report_render.hpp"

#include <algorithm>
#include <cmath>

#include "tracerecon/errors.hpp"

namespace tracerecon {

namespace {

using nlohmann::json;

json meta_to_json(const Meta& meta) {
  json out = json::object();
  for (const auto& [key, value] : meta) out[key] = value;
  return out;
}

json attributes_to_json(const AttributeVector& a) {
  json out = json::object();
  for (int i = 0; i < kNumAttributes; ++i) out[AttributeVector::kFieldNames[static_cast<size_t>(i)]] = a[i];
  return out;
}

AttributeVector attributes_from_json(const json& j) {
  AttributeVector a;
  for (int i = 0; i < kNumAttributes; ++i)
    a[i] = j.at(AttributeVector::kFieldNames[static_cast<size_t>(i)]).get<double>();
  return a;
}

json make_artifact(const std::string& kind, const Meta& meta) {
  json doc;
  doc["format"] = 1;
  doc["kind"] = kind;
  doc["meta"] = meta_to_json(meta);
  return doc;
}

// Display rounding for table cells; artifacts keep full precision.
std::string cell(double v) { return format_double(std::round(v * 100.0) / 100.0); }

std::string render_table(const std::vector<std::vector<std::string>>& rows, bool markdown) {
  std::string out;
  if (markdown) {
    for (size_t r = 0; r < rows.size(); ++r) {
      out += '|';
      for (const std::string& c : rows[r]) {
        out += ' ';
        out += c;
        out += " |";
      }
      out += '\n';
      if (r == 0) {
        out += '|';
        for (size_t c = 0; c < rows[0].size(); ++c) out += " --- |";
        out += '\n';
      }
    }
  } else {
    for (const auto& row : rows) {
      for (size_t c = 0; c < row.size(); ++c) {
        if (c) out += ',';
        out += row[c];
      }
      out += '\n';
    }
  }
  return out;
}

const std::vector<std::string> kAttributeHeader = {"convs",  "fcs",    "softms", "relus",
                                                   "mpools", "apools", "merges", "biases"};

void append_attribute_cells(std::vector<std::string>& row, const AttributeVector& a, bool exact) {
  for (int i = 0; i < kNumAttributes; ++i) row.push_back(exact ? format_double(a[i]) : cell(a[i]));
}

void check_kind(const json& artifact, const std::string& expect) {
  if (!artifact.contains("kind") || artifact.at("kind").get<std::string>() != expect)
    throw DataError("expected a '" + expect + "' artifact");
}

std::string render_extraction(const std::vector<json>& artifacts, bool markdown) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Arch", "Data"};
  header.insert(header.end(), kAttributeHeader.begin(), kAttributeHeader.end());
  header.push_back("Errors");
  rows.push_back(header);

  std::vector<std::string> seen_archs;
  for (const json& artifact : artifacts) {
    check_kind(artifact, "extraction");
    const std::string arch = artifact.at("arch").get<std::string>();
    const bool new_arch =
        std::find(seen_archs.begin(), seen_archs.end(), arch) == seen_archs.end();
    if (new_arch) {
      seen_archs.push_back(arch);
      if (artifact.contains("ground_truth")) {
        std::vector<std::string> g = {arch, "G"};
        append_attribute_cells(g, attributes_from_json(artifact.at("ground_truth")), true);
        g.push_back("-");
        rows.push_back(g);
      }
    }
    std::vector<std::string> row = {arch, artifact.at("mode").get<std::string>()};
    append_attribute_cells(row, attributes_from_json(artifact.at("mean")), false);
    if (artifact.contains("error")) {
      row.push_back(cell(artifact.at("error").get<double>()) + "/" +
                    format_double(artifact.at("denominator").get<double>()));
    } else {
      row.push_back("-");
    }
    rows.push_back(row);
  }
  return render_table(rows, markdown);
}

std::string render_recon(const std::vector<json>& artifacts, bool markdown) {
  std::string out;
  for (const json& artifact : artifacts) {
    check_kind(artifact, "recon");
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Block", "Kind", "Convs"});
    int i = 1;
    for (const json& b : artifact.at("blocks")) {
      rows.push_back({std::to_string(i++), b.at("kind").get<std::string>(),
                      format_double(b.at("convs").get<double>())});
    }
    out += render_table(rows, markdown);
    out += markdown ? "\n" : "";
    std::vector<std::vector<std::string>> tail;
    tail.push_back({"Candidate", "Distance"});
    for (const json& c : artifact.at("candidates"))
      tail.push_back({c.at("name").get<std::string>(), std::to_string(c.at("distance").get<int>())});
    out += render_table(tail, markdown);
  }
  return out;
}

std::string render_fingerprint(const std::vector<json>& artifacts, bool markdown) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Task", "Acc. [Avg.]", "Important Attributes"});
  for (const json& artifact : artifacts) {
    check_kind(artifact, "fingerprint");
    std::string acc = cell(artifact.at("best_accuracy").get<double>()) + " [" +
                      cell(artifact.at("mean_accuracy").get<double>()) + "]";
    std::string attrs;
    int listed = 0;
    for (const json& e : artifact.at("mutual_information")) {
      if (listed == 4) break;
      if (listed) attrs += markdown ? ", " : "; ";
      attrs += "#" + e.at("feature").get<std::string>() + " [" +
               cell(e.at("mi_bits").get<double>()) + "]";
      ++listed;
    }
    rows.push_back({artifact.at("task").get<std::string>(), acc, attrs});
  }
  return render_table(rows, markdown);
}

std::string render_defense(const std::vector<json>& artifacts, bool markdown) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Network", "Defense"};
  header.insert(header.end(), kAttributeHeader.begin(), kAttributeHeader.end());
  header.push_back("Errors");
  header.push_back("Events");
  rows.push_back(header);

  bool baseline_emitted = false;
  for (const json& artifact : artifacts) {
    check_kind(artifact, "defense");
    const std::string arch = artifact.at("arch").get<std::string>();
    if (!baseline_emitted) {
      std::vector<std::string> base = {arch, "-"};
      append_attribute_cells(base, attributes_from_json(artifact.at("baseline_mean")), false);
      base.push_back(cell(artifact.at("baseline_error").get<double>()));
      base.push_back(format_double(artifact.at("baseline_events_per_run").get<double>()));
      rows.push_back(base);
      baseline_emitted = true;
    }
    std::vector<std::string> row = {arch, artifact.at("descriptor").get<std::string>()};
    append_attribute_cells(row, attributes_from_json(artifact.at("mean")), false);
    row.push_back(cell(artifact.at("mean_error").get<double>()));
    row.push_back(format_double(artifact.at("events_per_run").get<double>()));
    rows.push_back(row);
  }
  return render_table(rows, markdown);
}

std::string render_pca(const std::vector<json>& artifacts, bool markdown) {
  std::string out;
  for (const json& artifact : artifacts) {
    check_kind(artifact, "pca");
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {""};
    header.insert(header.end(), kAttributeHeader.begin(), kAttributeHeader.end());
    rows.push_back(header);
    const auto& loadings = artifact.at("loadings");
    for (size_t k = 0; k < 2 && k < loadings.size(); ++k) {
      std::vector<std::string> row = {"PCA-" + std::to_string(k)};
      for (const json& x : loadings[k])
        row.push_back(format_double(std::round(x.get<double>() * 10000.0) / 10000.0));
      rows.push_back(row);
    }
    out += render_table(rows, markdown);
  }
  return out;
}

}  // namespace

std::string meta_comment_block(const Meta& meta, bool markdown) {
  std::string out;
  for (const auto& [key, value] : meta) {
    if (markdown) {
      out += "<!-- " + key + "=" + value + " -->\n";
    } else {
      out += "# " + key + "=" + value + "\n";
    }
  }
  return out;
}

nlohmann::json extraction_artifact(const ExtractionReport& report, const Meta& meta) {
  json doc = make_artifact("extraction", meta);
  doc["arch"] = report.arch;
  doc["mode"] = std::string(1, report.mode);
  doc["mean"] = attributes_to_json(report.mean);
  json per_query = json::array();
  for (const AttributeVector& v : report.per_query) per_query.push_back(attributes_to_json(v));
  doc["per_query"] = std::move(per_query);
  if (report.ground_truth) doc["ground_truth"] = attributes_to_json(*report.ground_truth);
  if (report.error) doc["error"] = *report.error;
  if (report.denominator) doc["denominator"] = *report.denominator;
  return doc;
}

nlohmann::json recon_artifact(const BlockStructure& structure, const std::vector<Candidate>& candidates,
                              const Meta& meta) {
  json doc = make_artifact("recon", meta);
  json blocks = json::array();
  for (const ReconBlock& b : structure.blocks) {
    json jb;
    jb["kind"] = b.kind == BlockKind::ConvNet ? "convnet-" + std::to_string(b.convs)
                                              : to_string(b.kind);
    jb["convs"] = b.convs;
    blocks.push_back(std::move(jb));
  }
  doc["blocks"] = std::move(blocks);
  doc["fc_tail"] = structure.fc_tail;
  doc["softmax"] = structure.softmax;
  json cands = json::array();
  for (const Candidate& c : candidates) {
    json jc;
    jc["name"] = c.name;
    jc["distance"] = c.distance;
    cands.push_back(std::move(jc));
  }
  doc["candidates"] = std::move(cands);
  return doc;
}

nlohmann::json fingerprint_artifact(const CVReport& report, const FeatureImportance& importance,
                                    const Meta& meta) {
  json doc = make_artifact("fingerprint", meta);
  doc["task"] = report.task;
  doc["folds"] = report.folds;
  doc["seed"] = report.seed;
  doc["fold_accuracies"] = report.fold_accuracies;
  doc["best_accuracy"] = report.best_accuracy;
  doc["mean_accuracy"] = report.mean_accuracy;
  json mi = json::array();
  for (const auto& e : importance.ranked) {
    json je;
    je["feature"] = AttributeVector::kFieldNames[static_cast<size_t>(e.feature)];
    je["mi_bits"] = e.mi_bits;
    mi.push_back(std::move(je));
  }
  doc["mutual_information"] = std::move(mi);
  return doc;
}

nlohmann::json defense_artifact(const DefenseReport& report, const Meta& meta) {
  json doc = make_artifact("defense", meta);
  doc["arch"] = report.arch;
  doc["descriptor"] = report.descriptor;
  doc["runs"] = report.runs;
  doc["queries_per_run"] = report.queries_per_run;
  doc["seed"] = report.seed;
  doc["mean"] = attributes_to_json(report.mean);
  doc["baseline_mean"] = attributes_to_json(report.baseline_mean);
  doc["mean_error"] = report.mean_error;
  doc["baseline_error"] = report.baseline_error;
  doc["events_per_run"] = report.events_per_run;
  doc["baseline_events_per_run"] = report.baseline_events_per_run;
  json per_run = json::array();
  for (const AttributeVector& v : report.per_run) per_run.push_back(attributes_to_json(v));
  doc["per_run"] = std::move(per_run);
  json baseline = json::array();
  for (const AttributeVector& v : report.baseline_per_run) baseline.push_back(attributes_to_json(v));
  doc["baseline_per_run"] = std::move(baseline);
  return doc;
}

nlohmann::json pca_artifact(const PCAResult& result, const Meta& meta) {
  json doc = make_artifact("pca", meta);
  json loadings = json::array();
  for (const auto& component : result.loadings) {
    json row = json::array();
    for (double x : component) row.push_back(x);
    loadings.push_back(std::move(row));
  }
  doc["loadings"] = std::move(loadings);
  json values = json::array();
  for (double x : result.eigenvalues) values.push_back(x);
  doc["eigenvalues"] = std::move(values);
  doc["degenerate"] = result.degenerate;
  return doc;
}

std::string render_artifacts(const std::string& table_kind, const std::vector<nlohmann::json>& artifacts,
                             bool markdown) {
  if (artifacts.empty()) throw ContractError("render_artifacts: no artifacts given");
  if (table_kind == "table2" || table_kind == "table8") return render_extraction(artifacts, markdown);
  if (table_kind == "table3") return render_recon(artifacts, markdown);
  if (table_kind == "table4") return render_fingerprint(artifacts, markdown);
  if (table_kind == "table5" || table_kind == "table6") return render_defense(artifacts, markdown);
  if (table_kind == "table9") return render_pca(artifacts, markdown);
  throw ContractError("render_artifacts: unknown table kind '" + table_kind +
                      "' (table2|table3|table4|table5|table6|table8|table9)");
}

nlohmann::json parse_artifact(const std::string& text) {
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    if (!doc.contains("format") || doc.at("format").get<int>() != 1)
      throw DataError("artifact: unsupported format version");
    return doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("artifact parse error: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("artifact structure error: ") + e.what());
  }
}

}  // namespace tracerecon
