#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "tracerecon/defense_eval.hpp"
#include "tracerecon/fingerprint.hpp"
#include "tracerecon/recon.hpp"

namespace tracerecon {

// Ordered key=value pairs stamped on every artifact and rendered output
// (version, seed, parameters). Never contains file paths or timestamps, so
// identical runs give identical bytes.
using Meta = std::vector<std::pair<std::string, std::string>>;

std::string meta_comment_block(const Meta& meta, bool markdown);

// JSON artifacts ("format": 1, "kind": ...) are the machine-readable form of
// every report; the table renderers below consume them.
nlohmann::json extraction_artifact(const ExtractionReport& report, const Meta& meta);
nlohmann::json recon_artifact(const BlockStructure& structure, const std::vector<Candidate>& candidates,
                              const Meta& meta);
nlohmann::json fingerprint_artifact(const CVReport& report, const FeatureImportance& importance,
                                    const Meta& meta);
nlohmann::json defense_artifact(const DefenseReport& report, const Meta& meta);
nlohmann::json pca_artifact(const PCAResult& result, const Meta& meta);

// table_kind: table2 | table3 | table4 | table5 | table6 | table8 | table9.
// Renders the matching artifact list as markdown or CSV.
std::string render_artifacts(const std::string& table_kind, const std::vector<nlohmann::json>& artifacts,
                             bool markdown);

nlohmann::json parse_artifact(const std::string& text);

}  // namespace tracerecon
