#include "tracerecon/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tracerecon/arch_catalog.hpp"
#include "tracerecon/config.hpp"
#include "tracerecon/defense_eval.hpp"
#include "tracerecon/errors.hpp"
#include "tracerecon/fingerprint.hpp"
#include "tracerecon/probe_calib.hpp"
#include "tracerecon/recon.hpp"
#include "tracerecon/report_render.hpp"
#include "tracerecon/rng.hpp"
#include "tracerecon/trace_engine.hpp"

namespace tracerecon::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("write failed for '" + path + "'");
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_file(out_path, content);
  }
}

const ArchTemplate& require_arch(const Catalog& catalog, const std::string& name) {
  const auto it = catalog.find(name);
  if (it != catalog.end()) return it->second;
  std::string valid;
  for (const std::string& n : catalog_names()) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw ContractError("unknown arch '" + name + "'; valid names: " + valid);
}

struct NoiseFlags {
  bool noiseless = false;
  double p_miss = -1.0;  // < 0 means "use default"
  std::vector<std::string> rates;
};

void add_noise_flags(CLI::App* sub, NoiseFlags& flags) {
  sub->add_flag("--noiseless", flags.noiseless, "Disable the noise channel entirely");
  sub->add_option("--p-miss", flags.p_miss, "Per-event miss probability");
  sub->add_option("--noise-rate", flags.rates,
                  "Spurious rate as CODE=R (repeatable), e.g. --noise-rate MERGE=0.5");
}

NoiseModel resolve_noise(const NoiseFlags& flags, const Defaults& defaults) {
  if (flags.noiseless) {
    if (flags.p_miss >= 0.0 || !flags.rates.empty())
      throw ContractError("--noiseless conflicts with --p-miss/--noise-rate");
    return NoiseModel::noiseless();
  }
  NoiseModel noise = defaults.noise;
  if (flags.p_miss >= 0.0) noise.p_miss = flags.p_miss;
  if (!flags.rates.empty()) {
    noise.spurious_rates = {};
    for (const std::string& entry : flags.rates) {
      const size_t eq = entry.find('=');
      if (eq == std::string::npos) throw ContractError("--noise-rate expects CODE=R, got '" + entry + "'");
      const auto code = function_code_from_string(entry.substr(0, eq));
      if (!code) throw ContractError("--noise-rate: unknown code '" + entry.substr(0, eq) + "'");
      try {
        noise.set_rate(*code, std::stod(entry.substr(eq + 1)));
      } catch (const std::exception&) {
        throw ContractError("--noise-rate: bad rate in '" + entry + "'");
      }
    }
  }
  return noise;
}

void append_noise_meta(Meta& meta, const NoiseModel& noise) {
  meta.emplace_back("p_miss", format_double(noise.p_miss));
  for (int c = 0; c < kNumFunctionCodes; ++c) {
    const double r = noise.spurious_rates[static_cast<size_t>(c)];
    if (r != 0.0)
      meta.emplace_back(std::string("rate.") + to_string(static_cast<FunctionCode>(c)), format_double(r));
  }
}

std::string json_text(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Cache side-channel trace laboratory: victim simulation, Flush+Reload "
               "observation modeling, architecture reconstruction, fingerprinting, defenses"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "Key=value defaults file (overrides built-in defaults)");

  auto defaults = [&config_path]() {
    if (config_path.empty()) return Defaults::builtin();
    return parse_config(read_file(config_path));
  };

  const Catalog catalog = build_catalog();
  int status = 0;

  // -------------------------------------------------------------- simulate
  auto* simulate = app.add_subcommand("simulate", "Emit a ground-truth victim trace");
  {
    static std::string arch, mode_str, out_path;
    static uint64_t queries = 1;
    static int64_t frozen = -1, seed = -1;
    arch.clear(); mode_str = "inference"; out_path.clear();
    queries = 1; frozen = -1; seed = -1;
    simulate->add_option("--arch", arch, "Network name")->required();
    simulate->add_option("--queries", queries, "Number of inference queries")->capture_default_str();
    simulate->add_option("--mode", mode_str, "inference | training")->capture_default_str();
    simulate->add_option("--frozen-prefix", frozen, "Bias-bearing layers frozen during training");
    simulate->add_option("--seed", seed, "Seed recorded for downstream observation");
    simulate->add_option("--out", out_path, "Trace file")->required();
    simulate->callback([&] {
      const ArchTemplate& t = require_arch(catalog, arch);
      TraceMode mode;
      if (mode_str == "inference") mode = TraceMode::Inference;
      else if (mode_str == "training") mode = TraceMode::Training;
      else throw ContractError("--mode must be inference or training");
      std::optional<uint32_t> frozen_prefix;
      if (frozen >= 0) frozen_prefix = static_cast<uint32_t>(frozen);
      GroundTruthTrace trace = emit_trace(t, queries, mode, frozen_prefix);
      if (seed >= 0) trace.seed = static_cast<uint64_t>(seed);
      write_file(out_path, serialize_trace(trace));
    });
  }

  // --------------------------------------------------------------- observe
  auto* observe_cmd = app.add_subcommand("observe", "Apply the noise channel to a trace");
  {
    static std::string trace_path, out_path;
    static int64_t seed = -1;
    static NoiseFlags noise_flags;
    trace_path.clear(); out_path.clear(); seed = -1; noise_flags = {};
    observe_cmd->add_option("--trace", trace_path, "Trace file")->required();
    observe_cmd->add_option("--seed", seed, "Observation seed (defaults to the trace's recorded seed)");
    add_noise_flags(observe_cmd, noise_flags);
    observe_cmd->add_option("--out", out_path, "Observation file")->required();
    observe_cmd->callback([&] {
      const GroundTruthTrace trace = parse_trace(read_file(trace_path));
      uint64_t s;
      if (seed >= 0) s = static_cast<uint64_t>(seed);
      else if (trace.seed) s = *trace.seed;
      else throw ContractError("no seed: pass --seed or record one with simulate --seed");
      const Observation obs = observe(trace, resolve_noise(noise_flags, defaults()), s);
      write_file(out_path, serialize_observation(obs));
    });
  }

  // --------------------------------------------------------------- extract
  auto* extract = app.add_subcommand("extract", "Average attribute vectors from observations");
  {
    static std::vector<std::string> obs_paths;
    static std::string mode_str, arch, out_path, json_path, format;
    static bool truth = false;
    obs_paths.clear(); mode_str.clear(); arch.clear(); out_path.clear(); json_path.clear();
    format = "md"; truth = false;
    extract->add_option("observations", obs_paths, "Observation files")->required()->expected(-1);
    extract->add_option("--mode", mode_str, "S (ten single-query observations) | L (one long window)")
        ->required();
    extract->add_flag("--truth", truth, "Compare against the catalog ground truth");
    extract->add_option("--arch", arch, "Ground-truth arch (defaults to observation provenance)");
    extract->add_option("--format", format, "md | csv")->capture_default_str();
    extract->add_option("--out", out_path, "Report file (stdout when omitted)");
    extract->add_option("--json", json_path, "Machine-readable artifact file");
    extract->callback([&] {
      if (mode_str != "S" && mode_str != "L") throw ContractError("--mode must be S or L");
      if (format != "md" && format != "csv") throw ContractError("--format must be md or csv");
      std::vector<Observation> observations;
      for (const std::string& p : obs_paths) observations.push_back(parse_observation(read_file(p)));
      const AttributeVector* truth_vec = nullptr;
      AttributeVector g;
      if (truth) {
        const std::string name = !arch.empty() ? arch : observations.front().provenance_arch;
        if (name.empty())
          throw ContractError("--truth needs an arch: pass --arch or use observations with provenance");
        g = attributes_of(require_arch(catalog, name));
        truth_vec = &g;
      }
      const ExtractionReport report = attack_report(observations, mode_str[0], truth_vec);
      Meta meta{{"version", "1"}, {"mode", mode_str}, {"arch", report.arch},
                {"observations", std::to_string(observations.size())},
                {"seed", std::to_string(observations.front().seed)}};
      append_noise_meta(meta, observations.front().noise);
      const nlohmann::json artifact = extraction_artifact(report, meta);
      const bool md = format == "md";
      emit(out_path, meta_comment_block(meta, md) + render_artifacts("table2", {artifact}, md));
      if (!json_path.empty()) write_file(json_path, json_text(artifact));
      if (report.error)
        std::cerr << "error=" << format_double(*report.error) << "/"
                  << format_double(*report.denominator) << "\n";
    });
  }

  // ----------------------------------------------------------- reconstruct
  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Segment a query into blocks and identify it");
  {
    static std::string obs_path, out_path, json_path, format;
    static uint64_t query_index = 0;
    obs_path.clear(); out_path.clear(); json_path.clear(); format = "md"; query_index = 0;
    reconstruct_cmd->add_option("--obs", obs_path, "Observation file")->required();
    reconstruct_cmd->add_option("--query", query_index, "Query index to reconstruct")->capture_default_str();
    reconstruct_cmd->add_option("--format", format, "md | csv")->capture_default_str();
    reconstruct_cmd->add_option("--out", out_path, "Report file (stdout when omitted)");
    reconstruct_cmd->add_option("--json", json_path, "Machine-readable artifact file");
    reconstruct_cmd->callback([&] {
      if (format != "md" && format != "csv") throw ContractError("--format must be md or csv");
      const Observation obs = parse_observation(read_file(obs_path));
      const auto sequences = split_queries(obs);
      if (query_index >= sequences.size())
        throw ContractError("--query out of range: observation holds " +
                            std::to_string(sequences.size()) + " queries");
      const BlockStructure structure = reconstruct(sequences[query_index]);
      const std::vector<Candidate> candidates = identify(structure, catalog);
      Meta meta{{"version", "1"}, {"arch", obs.provenance_arch},
                {"query", std::to_string(query_index)}, {"seed", std::to_string(obs.seed)}};
      const nlohmann::json artifact = recon_artifact(structure, candidates, meta);
      const bool md = format == "md";
      emit(out_path, meta_comment_block(meta, md) + render_artifacts("table3", {artifact}, md));
      if (!json_path.empty()) write_file(json_path, json_text(artifact));
      std::cerr << "identified=" << candidates.front().name
                << " distance=" << candidates.front().distance << "\n";
    });
  }

  // ---------------------------------------------------------------- freeze
  auto* freeze = app.add_subcommand("freeze", "Infer the training freeze point from GRAD counts");
  {
    static std::string obs_path, arch, json_path;
    obs_path.clear(); arch.clear(); json_path.clear();
    freeze->add_option("--obs", obs_path, "Training-mode observation file")->required();
    freeze->add_option("--arch", arch, "Victim template")->required();
    freeze->add_option("--json", json_path, "Machine-readable artifact file");
    freeze->callback([&] {
      const Observation obs = parse_observation(read_file(obs_path));
      const ArchTemplate& t = require_arch(catalog, arch);
      const FreezeReport fr = detect_freeze(obs, t);
      std::cout << "updated_layers=" << fr.updated_layers << " frozen_prefix=" << fr.frozen_prefix
                << " mean_grads=" << format_double(fr.mean_grads_per_query) << "\n";
      if (!json_path.empty()) {
        nlohmann::json doc;
        doc["format"] = 1;
        doc["kind"] = "freeze";
        doc["meta"] = {{"version", "1"}, {"arch", arch}, {"seed", std::to_string(obs.seed)}};
        doc["updated_layers"] = fr.updated_layers;
        doc["frozen_prefix"] = fr.frozen_prefix;
        doc["mean_grads_per_query"] = fr.mean_grads_per_query;
        write_file(json_path, json_text(doc));
      }
    });
  }

  // ----------------------------------------------------------- fingerprint
  auto* fingerprint = app.add_subcommand("fingerprint", "Build the attribute dataset and train the meta-model");
  {
    static std::string task, out_dir;
    static int per_arch = -1, folds = -1;
    static uint64_t seed = 0;
    static unsigned jobs = 1;
    static NoiseFlags noise_flags;
    task = "all13"; out_dir.clear(); per_arch = -1; folds = -1; seed = 0; jobs = 1; noise_flags = {};
    fingerprint->add_option("--task", task, "all13 | family | variant:<letter>")->capture_default_str();
    fingerprint->add_option("--per-arch", per_arch, "Observations per network (default from config)");
    fingerprint->add_option("--folds", folds, "Cross-validation folds (default from config)");
    fingerprint->add_option("--seed", seed, "Master seed")->capture_default_str();
    fingerprint->add_option("--jobs", jobs, "Worker threads for dataset generation")->capture_default_str();
    add_noise_flags(fingerprint, noise_flags);
    fingerprint->add_option("--out-dir", out_dir, "Output directory")->required();
    fingerprint->callback([&] {
      const Defaults d = defaults();
      const int n = per_arch > 0 ? per_arch : d.dataset_per_arch;
      const int k = folds > 0 ? folds : d.cv_folds;
      const NoiseModel noise = resolve_noise(noise_flags, d);

      const Dataset base = build_dataset(catalog, n, noise, seed, jobs);
      const Dataset ds = relabel(base, task, catalog);
      const TrainResult trained = train_tree(ds, k, seed);
      const FeatureImportance mi = mutual_information(ds);
      const PCAResult projection = pca(ds);

      Meta meta{{"version", "1"}, {"task", task}, {"per_arch", std::to_string(n)},
                {"folds", std::to_string(k)}, {"seed", std::to_string(seed)}};
      append_noise_meta(meta, noise);

      const std::filesystem::path dir(out_dir);
      write_file((dir / "dataset.csv").string(),
                 meta_comment_block(meta, false) + dataset_to_csv(ds));
      for (const TreeModel& tree : trained.fold_models) {
        write_file((dir / ("tree_fold" + std::to_string(tree.fold) + ".txt")).string(),
                   meta_comment_block(meta, false) + tree.export_text());
      }
      const nlohmann::json artifact = fingerprint_artifact(trained.report, mi, meta);
      write_file((dir / "fingerprint.json").string(), json_text(artifact));
      write_file((dir / "report.md").string(),
                 meta_comment_block(meta, true) + render_artifacts("table4", {artifact}, true));
      const nlohmann::json pca_doc = pca_artifact(projection, meta);
      write_file((dir / "pca.json").string(), json_text(pca_doc));
      write_file((dir / "pca_loadings.csv").string(),
                 meta_comment_block(meta, false) + render_artifacts("table9", {pca_doc}, false));
      std::string projections = "pc0,pc1,label\n";
      for (size_t i = 0; i < projection.projections.size(); ++i) {
        projections += format_double(projection.projections[i][0]) + "," +
                       format_double(projection.projections[i][1]) + "," + ds.labels[i] + "\n";
      }
      write_file((dir / "pca_projections.csv").string(),
                 meta_comment_block(meta, false) + projections);
      std::cerr << "task=" << task << " best=" << format_double(trained.report.best_accuracy)
                << " mean=" << format_double(trained.report.mean_accuracy) << "\n";
    });
  }

  // ---------------------------------------------------------------- defend
  auto* defend = app.add_subcommand("defend", "Evaluate a defense against the extraction attack");
  {
    static std::string defense, arch, decoy_text, insert_kind_str, out_path, json_path, format;
    static double decoy_rate = -1.0;
    static int runs = -1, insert_count = 5, k_blocks = 3;
    static int64_t queries = -1;
    static uint64_t seed = 0;
    static NoiseFlags noise_flags;
    defense.clear(); arch = "ResNet50"; decoy_text = "C:1"; insert_kind_str = "conv_relu";
    out_path.clear(); json_path.clear(); format = "md"; decoy_rate = -1.0; runs = -1;
    insert_count = 5; k_blocks = 3; queries = -1; seed = 0; noise_flags = {};
    defend->add_option("--defense", defense, "decoy | insert | unravel")->required();
    defend->add_option("--arch", arch, "Victim network")->capture_default_str();
    defend->add_option("--decoy", decoy_text, "Tiny net spec, e.g. C:1 or C:2,R:2,M:1")->capture_default_str();
    defend->add_option("--decoy-rate", decoy_rate, "Decoy iterations per victim query (default from config)");
    defend->add_option("--insert-count", insert_count, "Layers to insert")->capture_default_str();
    defend->add_option("--insert-kind", insert_kind_str, "conv_relu | identity_block")->capture_default_str();
    defend->add_option("--k-blocks", k_blocks, "Blocks to unravel")->capture_default_str();
    defend->add_option("--runs", runs, "Independent runs (default from config)");
    defend->add_option("--queries", queries, "Victim queries per run (default from config)");
    defend->add_option("--seed", seed, "Master seed")->capture_default_str();
    add_noise_flags(defend, noise_flags);
    defend->add_option("--format", format, "md | csv")->capture_default_str();
    defend->add_option("--out", out_path, "Report file (stdout when omitted)");
    defend->add_option("--json", json_path, "Machine-readable artifact file");
    defend->callback([&] {
      if (format != "md" && format != "csv") throw ContractError("--format must be md or csv");
      const Defaults d = defaults();
      const ArchTemplate& t = require_arch(catalog, arch);
      const NoiseModel noise = resolve_noise(noise_flags, d);
      const int r = runs > 0 ? runs : d.defense_runs;
      const uint64_t q = queries > 0 ? static_cast<uint64_t>(queries)
                                     : static_cast<uint64_t>(d.defense_queries);

      DefenseReport report;
      std::string table_kind;
      if (defense == "decoy") {
        const double rate = decoy_rate > 0 ? decoy_rate : d.decoy_rate;
        report = eval_decoy(t, parse_decoy_spec(decoy_text, rate), r, noise, seed, q);
        table_kind = "table5";
      } else if (defense == "insert" || defense == "unravel") {
        ObfuscationSpec spec;
        if (defense == "insert") {
          spec.variant = ObfuscationVariant::InsertPreserving;
          spec.insert_count = insert_count;
          if (insert_kind_str == "conv_relu") spec.insert_kind = InsertKind::ConvRelu;
          else if (insert_kind_str == "identity_block") spec.insert_kind = InsertKind::IdentityBlock;
          else throw ContractError("--insert-kind must be conv_relu or identity_block");
          spec.seed = derive_seed(seed, 101);
        } else {
          spec.variant = ObfuscationVariant::Unravel;
          spec.k_blocks = k_blocks;
        }
        report = eval_obfuscation(t, spec, r, noise, seed, q);
        table_kind = "table6";
      } else {
        throw ContractError("--defense must be decoy, insert or unravel");
      }

      Meta meta{{"version", "1"}, {"arch", arch}, {"defense", report.descriptor},
                {"runs", std::to_string(r)}, {"queries", std::to_string(q)},
                {"seed", std::to_string(seed)}};
      append_noise_meta(meta, noise);
      const nlohmann::json artifact = defense_artifact(report, meta);
      const bool md = format == "md";
      emit(out_path, meta_comment_block(meta, md) + render_artifacts(table_kind, {artifact}, md));
      if (!json_path.empty()) write_file(json_path, json_text(artifact));
      std::cerr << "defense=" << report.descriptor
                << " error=" << format_double(report.mean_error)
                << " baseline=" << format_double(report.baseline_error) << "\n";
    });
  }

  // ------------------------------------------------------------- calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Latency threshold or noise-default calibration");
  {
    static std::string latency_path, histogram_path, write_config_path;
    static bool noise_mode = false;
    static int cal_seeds = 10;
    static uint64_t seed = 1;
    latency_path.clear(); histogram_path.clear(); write_config_path.clear();
    noise_mode = false; cal_seeds = 10; seed = 1;
    calibrate->add_option("--latency-file", latency_path, "One reload latency (cycles) per line");
    calibrate->add_option("--histogram-out", histogram_path, "Write a latency,count CSV");
    calibrate->add_flag("--noise", noise_mode, "Grid-search the committed noise defaults");
    calibrate->add_option("--seeds", cal_seeds, "Seeds per grid point")->capture_default_str();
    calibrate->add_option("--seed", seed, "Master seed for the grid search")->capture_default_str();
    calibrate->add_option("--write-config", write_config_path, "Write the chosen defaults as a config file");
    calibrate->callback([&] {
      if (noise_mode == latency_path.empty()) {
        // exactly one of the two modes
        if (noise_mode) {
          const NoiseCalibration cal = calibrate_noise(catalog, cal_seeds, seed);
          std::cout << "p_miss=" << format_double(cal.chosen.p_miss)
                    << " rate.MERGE=" << format_double(cal.chosen.rate(FunctionCode::Merge))
                    << " rate.CONV=" << format_double(cal.chosen.rate(FunctionCode::Conv))
                    << " vgg19_error=" << format_double(cal.vgg19_error)
                    << " resnet50_error=" << format_double(cal.resnet50_error) << "\n";
          if (!write_config_path.empty()) {
            Defaults d = defaults();
            d.noise = cal.chosen;
            write_file(write_config_path, config_to_text(d));
          }
          return;
        }
        const std::vector<int64_t> samples = parse_latency_samples(read_file(latency_path));
        const int64_t threshold = otsu_threshold(samples);
        std::cout << "threshold=" << threshold << "\n";
        if (!histogram_path.empty()) write_file(histogram_path, histogram_csv(samples));
        return;
      }
      throw ContractError("calibrate: pass exactly one of --latency-file or --noise");
    });
  }

  // ---------------------------------------------------------------- report
  auto* report_cmd = app.add_subcommand("report", "Re-render stored artifacts as paper-shaped tables");
  {
    static std::string kind, out_path, format;
    static std::vector<std::string> inputs;
    kind.clear(); out_path.clear(); format = "md"; inputs.clear();
    report_cmd->add_option("--kind", kind, "table2|table3|table4|table5|table6|table8|table9")->required();
    report_cmd->add_option("inputs", inputs, "Artifact JSON files")->required()->expected(-1);
    report_cmd->add_option("--format", format, "md | csv")->capture_default_str();
    report_cmd->add_option("--out", out_path, "Output file (stdout when omitted)");
    report_cmd->callback([&] {
      if (format != "md" && format != "csv") throw ContractError("--format must be md or csv");
      std::vector<nlohmann::json> artifacts;
      for (const std::string& p : inputs) artifacts.push_back(parse_artifact(read_file(p)));
      Meta meta{{"version", "1"}, {"table", kind}};
      const bool md = format == "md";
      emit(out_path, meta_comment_block(meta, md) + render_artifacts(kind, artifacts, md));
    });
  }

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("tracerecon");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}

}  // namespace tracerecon::cli
