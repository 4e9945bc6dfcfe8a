#include "tracerecon/trace_engine.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "tracerecon/errors.hpp"
#include "tracerecon/rng.hpp"

namespace tracerecon {

namespace {

void reindex(std::vector<TraceEvent>& events) {
  for (size_t i = 0; i < events.size(); ++i) events[i].seq = i;
}

std::vector<TraceEvent> to_events(const std::vector<FunctionCode>& codes) {
  std::vector<TraceEvent> events;
  events.reserve(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) events.push_back({i, codes[i]});
  return events;
}

}  // namespace

GroundTruthTrace emit_trace(const ArchTemplate& t, uint64_t n_queries, TraceMode mode,
                            std::optional<uint32_t> frozen_prefix) {
  if (n_queries < 1) throw ContractError("emit_trace: n_queries must be >= 1");
  if (frozen_prefix && mode != TraceMode::Training)
    throw ContractError("emit_trace: frozen_prefix requires training mode");
  const int bias_layers = bias_layer_count(t);
  if (frozen_prefix && static_cast<int>(*frozen_prefix) > bias_layers)
    throw ContractError("emit_trace: frozen_prefix exceeds bias-bearing layer count");

  const std::vector<FunctionCode> query_events = expand_events(t);
  const uint32_t frozen = frozen_prefix.value_or(0);
  const int grads_per_query = mode == TraceMode::Training ? bias_layers - static_cast<int>(frozen) : 0;

  std::vector<FunctionCode> codes;
  codes.reserve(n_queries * (query_events.size() + static_cast<size_t>(grads_per_query)));
  for (uint64_t q = 0; q < n_queries; ++q) {
    codes.insert(codes.end(), query_events.begin(), query_events.end());
    for (int g = 0; g < grads_per_query; ++g) codes.push_back(FunctionCode::Grad);
  }

  GroundTruthTrace trace;
  trace.events = to_events(codes);
  trace.arch = t.name;
  trace.n_queries = n_queries;
  trace.mode = mode;
  trace.frozen_prefix = frozen_prefix;
  return trace;
}

Observation observe(const GroundTruthTrace& trace, const NoiseModel& noise, uint64_t seed) {
  if (noise.p_miss < 0.0 || noise.p_miss > 1.0)
    throw ContractError("observe: p_miss must lie in [0, 1]");
  for (double r : noise.spurious_rates)
    if (!(r >= 0.0) || !std::isfinite(r))
      throw ContractError("observe: spurious rates must be finite and non-negative");

  Rng rng(seed);

  // Drop pass. One draw per non-QUERY event regardless of p_miss, so the
  // kept set shrinks monotonically in p_miss for a fixed seed.
  std::vector<FunctionCode> kept;
  kept.reserve(trace.events.size());
  for (const TraceEvent& e : trace.events) {
    if (e.code == FunctionCode::Query) {
      kept.push_back(e.code);
      continue;
    }
    if (rng.next_double() >= noise.p_miss) kept.push_back(e.code);
  }

  // Spurious pass: per code, Poisson(rate * n_queries) insertions at
  // uniformly random gaps of the kept sequence.
  struct Insertion {
    uint64_t pos;
    uint64_t order;
    FunctionCode code;
  };
  std::vector<Insertion> insertions;
  uint64_t order = 0;
  for (int c = 0; c < kNumFunctionCodes; ++c) {
    const double mean = noise.spurious_rates[static_cast<size_t>(c)] * static_cast<double>(trace.n_queries);
    if (mean <= 0.0) continue;
    const uint64_t count = rng.poisson(mean);
    for (uint64_t i = 0; i < count; ++i) {
      insertions.push_back({rng.uniform(kept.size() + 1), order++, static_cast<FunctionCode>(c)});
    }
  }
  std::stable_sort(insertions.begin(), insertions.end(),
                   [](const Insertion& a, const Insertion& b) {
                     return a.pos != b.pos ? a.pos < b.pos : a.order < b.order;
                   });

  std::vector<FunctionCode> merged;
  merged.reserve(kept.size() + insertions.size());
  size_t next_insertion = 0;
  for (size_t i = 0; i <= kept.size(); ++i) {
    while (next_insertion < insertions.size() && insertions[next_insertion].pos == i)
      merged.push_back(insertions[next_insertion++].code);
    if (i < kept.size()) merged.push_back(kept[i]);
  }

  Observation obs;
  obs.events = to_events(merged);
  obs.seed = seed;
  obs.noise = noise;
  obs.provenance_arch = trace.arch;
  obs.n_queries = trace.n_queries;
  return obs;
}

std::string DecoySpec::descriptor() const {
  int convs = 0, relus = 0, merges = 0;
  for (const LayerDesc& l : layers) {
    if (l.kind == LayerKind::Conv) ++convs;
    if (l.kind == LayerKind::Merge) ++merges;
    if (l.activation == Activation::Relu) ++relus;
  }
  std::string out = "C:" + std::to_string(convs);
  if (relus > 0) out += ",R:" + std::to_string(relus);
  if (merges > 0) out += ",M:" + std::to_string(merges);
  return out;
}

DecoySpec parse_decoy_spec(const std::string& text, double rate) {
  int convs = 0, relus = 0, merges = 0;
  std::string token;
  auto consume = [&](const std::string& tok) {
    if (tok.empty()) return;
    const auto colon = tok.find(':');
    if (colon == std::string::npos || colon + 1 >= tok.size())
      throw ContractError("decoy spec: expected LETTER:count, got '" + tok + "'");
    const std::string letter = tok.substr(0, colon);
    int value = 0;
    const char* first = tok.data() + colon + 1;
    const char* last = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || p != last || value < 0)
      throw ContractError("decoy spec: bad count in '" + tok + "'");
    if (letter == "C") convs = value;
    else if (letter == "R") relus = value;
    else if (letter == "M") merges = value;
    else throw ContractError("decoy spec: unknown layer letter '" + letter + "' (use C, R, M)");
  };
  for (char ch : text) {
    if (ch == ',' || ch == ' ') {
      consume(token);
      token.clear();
    } else {
      token.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    }
  }
  consume(token);
  if (convs + merges == 0) throw ContractError("decoy spec: tiny template must be non-empty");
  if (relus > convs)
    throw ContractError("decoy spec: relu count exceeds conv count (activations attach to convs)");

  DecoySpec spec;
  for (int i = 0; i < convs; ++i)
    spec.layers.push_back({LayerKind::Conv, i < relus ? Activation::Relu : Activation::None, false});
  for (int i = 0; i < merges; ++i) spec.layers.push_back({LayerKind::Merge, Activation::None, false});
  spec.rate = rate;
  return spec;
}

GroundTruthTrace merge_decoy(const GroundTruthTrace& victim, const DecoySpec& decoy, uint64_t seed) {
  if (!(decoy.rate > 0.0)) throw ContractError("merge_decoy: decoy rate must be > 0");
  if (decoy.layers.empty()) throw ContractError("merge_decoy: tiny template must be non-empty");

  const uint64_t iterations =
      std::max<uint64_t>(1, static_cast<uint64_t>(std::ceil(decoy.rate * static_cast<double>(victim.n_queries))));
  std::vector<FunctionCode> decoy_codes;
  for (uint64_t i = 0; i < iterations; ++i) expand_layers(decoy.layers, decoy_codes);

  // Random order-preserving merge: the j-th decoy event lands before the
  // victim event at the j-th smallest drawn gap index.
  Rng rng(seed);
  std::vector<uint64_t> keys(decoy_codes.size());
  for (auto& k : keys) k = rng.uniform(victim.events.size() + 1);
  std::sort(keys.begin(), keys.end());

  std::vector<TraceEvent> merged;
  merged.reserve(victim.events.size() + decoy_codes.size());
  size_t d = 0;
  for (size_t i = 0; i <= victim.events.size(); ++i) {
    while (d < keys.size() && keys[d] == i) merged.push_back({0, decoy_codes[d++]});
    if (i < victim.events.size()) merged.push_back({0, victim.events[i].code});
  }
  reindex(merged);

  GroundTruthTrace out = victim;
  out.events = std::move(merged);
  return out;
}

namespace {

int total_layer_count(const ArchTemplate& t) {
  int n = 0;
  for (const Block& b : t.blocks) n += static_cast<int>(b.layers.size());
  return n;
}

bool block_has_softmax(const Block& b) {
  for (const LayerDesc& l : b.layers)
    if (l.activation == Activation::Softmax) return true;
  return false;
}

bool block_has_conv(const Block& b) {
  for (const LayerDesc& l : b.layers)
    if (l.kind == LayerKind::Conv) return true;
  return false;
}

}  // namespace

ArchTemplate obfuscate(const ArchTemplate& t, const ObfuscationSpec& spec, uint64_t seed) {
  if (spec.variant != ObfuscationVariant::InsertPreserving)
    throw ContractError("obfuscate: expected insert_preserving variant (use unravel_blocks)");
  if (spec.insert_count < 0) throw ContractError("obfuscate: insert_count must be >= 0");
  if (spec.insert_count > 10 * total_layer_count(t))
    throw ContractError("obfuscate: insert positions exhausted");

  ArchTemplate out = t;
  if (spec.insert_count == 0) return out;
  Rng rng(seed);

  if (spec.insert_kind == InsertKind::ConvRelu) {
    for (int n = 0; n < spec.insert_count; ++n) {
      // Candidate slots: any position inside a conv-bearing block that does
      // not hold the softmax classifier.
      uint64_t slots = 0;
      for (const Block& b : out.blocks)
        if (block_has_conv(b) && !block_has_softmax(b)) slots += b.layers.size() + 1;
      if (slots == 0) throw ContractError("obfuscate: no conv-bearing block to insert into");
      uint64_t pick = rng.uniform(slots);
      for (Block& b : out.blocks) {
        if (!block_has_conv(b) || block_has_softmax(b)) continue;
        if (pick <= b.layers.size()) {
          b.layers.insert(b.layers.begin() + static_cast<long>(pick),
                          {LayerKind::Conv, Activation::Relu, false});
          break;
        }
        pick -= b.layers.size() + 1;
      }
    }
  } else {
    // Clone the template's own identity-block shape when it has one.
    Block identity{"identity",
                   {{LayerKind::Conv, Activation::Relu, false},
                    {LayerKind::Conv, Activation::Relu, false},
                    {LayerKind::Conv, Activation::None, false},
                    {LayerKind::Merge, Activation::Relu, false}}};
    for (const Block& b : t.blocks) {
      if (b.label == "identity") {
        identity = b;
        break;
      }
    }
    for (int n = 0; n < spec.insert_count; ++n) {
      if (out.blocks.size() < 2) throw ContractError("obfuscate: template too small for block insertion");
      const uint64_t pos = 1 + rng.uniform(out.blocks.size() - 1);
      out.blocks.insert(out.blocks.begin() + static_cast<long>(pos), identity);
    }
  }
  validate_template(out);
  return out;
}

ArchTemplate unravel_blocks(const ArchTemplate& t, int k_blocks) {
  if (k_blocks == 0) return t;
  if (k_blocks < 0) throw ContractError("unravel_blocks: k_blocks must be >= 0");

  std::vector<size_t> skip_indices;
  for (size_t i = 0; i < t.blocks.size(); ++i) {
    for (const LayerDesc& l : t.blocks[i].layers) {
      if (l.kind == LayerKind::Merge) {
        skip_indices.push_back(i);
        break;
      }
    }
  }
  if (static_cast<size_t>(k_blocks) > skip_indices.size())
    throw ContractError("unravel_blocks: template has fewer skip-connection blocks than k_blocks");
  for (int i = 1; i < k_blocks; ++i) {
    if (skip_indices[static_cast<size_t>(i)] != skip_indices[static_cast<size_t>(i - 1)] + 1)
      throw ContractError("unravel_blocks: first k skip-connection blocks must be contiguous");
  }

  const size_t first = skip_indices[0];
  std::vector<Block> sources(t.blocks.begin() + static_cast<long>(first),
                             t.blocks.begin() + static_cast<long>(first) + k_blocks);

  // U(1) = [B1, B1]; U(2) = [B1, B1, B2]; U(k) = U(k-1) U(k-1) [Bk].
  std::vector<Block> schedule = {sources[0], sources[0]};
  for (int k = 2; k <= k_blocks; ++k) {
    std::vector<Block> next = schedule;
    if (k >= 3) next.insert(next.end(), schedule.begin(), schedule.end());
    next.push_back(sources[static_cast<size_t>(k - 1)]);
    schedule = std::move(next);
  }

  ArchTemplate out = t;
  out.blocks.erase(out.blocks.begin() + static_cast<long>(first),
                   out.blocks.begin() + static_cast<long>(first) + k_blocks);
  out.blocks.insert(out.blocks.begin() + static_cast<long>(first), schedule.begin(), schedule.end());
  return out;
}

namespace {

void append_header(std::string& out, const std::string& key, const std::string& value) {
  out += "# ";
  out += key;
  out += '=';
  out += value;
  out += '\n';
}

void append_events(std::string& out, const std::vector<TraceEvent>& events) {
  for (const TraceEvent& e : events) {
    out += std::to_string(e.seq);
    out += ',';
    out += to_string(e.code);
    out += '\n';
  }
}

struct ParsedFile {
  std::vector<std::pair<std::string, std::string>> headers;
  std::vector<TraceEvent> events;
};

ParsedFile parse_file(const std::string& text) {
  ParsedFile out;
  size_t line_no = 0;
  size_t begin = 0;
  bool in_header = true;
  while (begin < text.size()) {
    size_t end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + begin, end - begin);
    ++line_no;
    begin = end + 1;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!in_header)
        throw DataError("line " + std::to_string(line_no) + ": header after data");
      std::string_view body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.remove_prefix(1);
      const size_t eq = body.find('=');
      if (eq == std::string_view::npos)
        throw DataError("line " + std::to_string(line_no) + ": expected key=value header");
      out.headers.emplace_back(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
      continue;
    }
    in_header = false;
    const size_t comma = line.find(',');
    if (comma == std::string_view::npos)
      throw DataError("line " + std::to_string(line_no) + ": expected 'seq,CODE'");
    uint64_t seq = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + comma, seq);
    if (ec != std::errc() || p != line.data() + comma)
      throw DataError("line " + std::to_string(line_no) + ": bad sequence number");
    const auto code = function_code_from_string(line.substr(comma + 1));
    if (!code)
      throw DataError("line " + std::to_string(line_no) + ": unknown function code '" +
                      std::string(line.substr(comma + 1)) + "'");
    if (!out.events.empty() && seq <= out.events.back().seq)
      throw DataError("line " + std::to_string(line_no) + ": sequence numbers must increase");
    out.events.push_back({seq, *code});
  }
  return out;
}

std::string require_header(const ParsedFile& f, const std::string& key) {
  for (const auto& [k, v] : f.headers)
    if (k == key) return v;
  throw DataError("missing required header '" + key + "'");
}

std::optional<std::string> find_header(const ParsedFile& f, const std::string& key) {
  for (const auto& [k, v] : f.headers)
    if (k == key) return v;
  return std::nullopt;
}

uint64_t parse_u64(const std::string& value, const std::string& what) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size())
    throw DataError("bad " + what + " value '" + value + "'");
  return out;
}

double parse_f64(const std::string& value, const std::string& what) {
  double out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size())
    throw DataError("bad " + what + " value '" + value + "'");
  return out;
}

uint64_t count_queries(const std::vector<TraceEvent>& events) {
  uint64_t n = 0;
  for (const TraceEvent& e : events)
    if (e.code == FunctionCode::Query) ++n;
  return n;
}

}  // namespace

std::string serialize_trace(const GroundTruthTrace& trace) {
  std::string out;
  append_header(out, "format", "1");
  append_header(out, "kind", "trace");
  if (!trace.arch.empty()) append_header(out, "arch", trace.arch);
  append_header(out, "mode", trace.mode == TraceMode::Training ? "training" : "inference");
  append_header(out, "queries", std::to_string(trace.n_queries));
  if (trace.frozen_prefix) append_header(out, "frozen_prefix", std::to_string(*trace.frozen_prefix));
  if (trace.seed) append_header(out, "seed", std::to_string(*trace.seed));
  append_events(out, trace.events);
  return out;
}

std::string serialize_observation(const Observation& obs) {
  std::string out;
  append_header(out, "format", "1");
  append_header(out, "kind", "observation");
  if (!obs.provenance_arch.empty()) append_header(out, "arch", obs.provenance_arch);
  append_header(out, "queries", std::to_string(obs.n_queries));
  append_header(out, "seed", std::to_string(obs.seed));
  append_header(out, "p_miss", format_double(obs.noise.p_miss));
  for (int c = 0; c < kNumFunctionCodes; ++c) {
    const double r = obs.noise.spurious_rates[static_cast<size_t>(c)];
    if (r != 0.0)
      append_header(out, std::string("rate.") + to_string(static_cast<FunctionCode>(c)), format_double(r));
  }
  append_events(out, obs.events);
  return out;
}

bool file_is_observation(const std::string& text) {
  const ParsedFile f = parse_file(text);
  return require_header(f, "kind") == "observation";
}

GroundTruthTrace parse_trace(const std::string& text) {
  const ParsedFile f = parse_file(text);
  if (require_header(f, "format") != "1") throw DataError("unsupported trace format version");
  if (require_header(f, "kind") != "trace") throw DataError("expected kind=trace");
  GroundTruthTrace trace;
  for (const auto& [key, value] : f.headers) {
    if (key == "format" || key == "kind") continue;
    if (key == "arch") trace.arch = value;
    else if (key == "mode") {
      if (value == "training") trace.mode = TraceMode::Training;
      else if (value == "inference") trace.mode = TraceMode::Inference;
      else throw DataError("bad mode value '" + value + "'");
    } else if (key == "queries") trace.n_queries = parse_u64(value, "queries");
    else if (key == "frozen_prefix") trace.frozen_prefix = static_cast<uint32_t>(parse_u64(value, "frozen_prefix"));
    else if (key == "seed") trace.seed = parse_u64(value, "seed");
    else throw DataError("unknown trace header '" + key + "'");
  }
  trace.events = f.events;
  if (count_queries(trace.events) != trace.n_queries)
    throw DataError("queries header disagrees with QUERY event count");
  return trace;
}

Observation parse_observation(const std::string& text) {
  const ParsedFile f = parse_file(text);
  if (require_header(f, "format") != "1") throw DataError("unsupported observation format version");
  if (require_header(f, "kind") != "observation") throw DataError("expected kind=observation");
  Observation obs;
  for (const auto& [key, value] : f.headers) {
    if (key == "format" || key == "kind") continue;
    if (key == "arch") obs.provenance_arch = value;
    else if (key == "queries") obs.n_queries = parse_u64(value, "queries");
    else if (key == "seed") obs.seed = parse_u64(value, "seed");
    else if (key == "p_miss") obs.noise.p_miss = parse_f64(value, "p_miss");
    else if (key.rfind("rate.", 0) == 0) {
      const auto code = function_code_from_string(key.substr(5));
      if (!code) throw DataError("unknown rate code in header '" + key + "'");
      obs.noise.set_rate(*code, parse_f64(value, key));
    } else throw DataError("unknown observation header '" + key + "'");
  }
  obs.events = f.events;
  if (!find_header(f, "queries"))
    obs.n_queries = count_queries(obs.events);
  return obs;
}

}  // namespace tracerecon
