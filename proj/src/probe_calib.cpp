#include "tracerecon/probe_calib.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "tracerecon/errors.hpp"

namespace tracerecon {

namespace {
constexpr int64_t kMaxLatency = 1 << 20;
constexpr size_t kMaxSamples = 1 << 20;
}  // namespace

int64_t otsu_threshold(std::span<const int64_t> samples) {
  if (samples.size() < 2) throw ContractError("otsu_threshold: need at least two samples");
  if (samples.size() > kMaxSamples) throw ContractError("otsu_threshold: too many samples");

  int64_t lo = samples[0], hi = samples[0];
  for (int64_t x : samples) {
    if (x <= 0) throw ContractError("otsu_threshold: latencies must be positive");
    if (x >= kMaxLatency) throw ContractError("otsu_threshold: latency out of supported range");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (lo == hi) throw ContractError("otsu_threshold: degenerate distribution (all samples equal)");

  std::vector<int64_t> counts(static_cast<size_t>(hi - lo + 1), 0);
  for (int64_t x : samples) counts[static_cast<size_t>(x - lo)] += 1;

  // Between-class variance for threshold t with class sums (n0, s0 | n1, s1):
  //   sigma_b^2 = n0*n1 * (s0/n0 - s1/n1)^2 / n^2
  // Maximizing it is comparing (s0*n1 - s1*n0)^2 / (n0*n1); the numerator and
  // denominator are exact in int64 within the documented input bounds.
  const int64_t n = static_cast<int64_t>(samples.size());
  int64_t s_total = 0;
  for (int64_t x : samples) s_total += x;

  int64_t n0 = 0, s0 = 0;
  int64_t best_threshold = 0;
  double best_score = -1.0;
  for (int64_t t = lo + 1; t <= hi; ++t) {
    n0 += counts[static_cast<size_t>(t - 1 - lo)];
    s0 += counts[static_cast<size_t>(t - 1 - lo)] * (t - 1);
    const int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const int64_t s1 = s_total - s0;
    const int64_t num = s0 * n1 - s1 * n0;
    const double score = static_cast<double>(num) * static_cast<double>(num) /
                         static_cast<double>(n0 * n1);
    if (score > best_score) {
      best_score = score;
      best_threshold = t;
    }
  }
  return best_threshold;
}

ProbeClass classify_latency(int64_t latency, int64_t threshold) {
  if (threshold <= 0) throw ContractError("classify_latency: threshold must be positive");
  return latency < threshold ? ProbeClass::Hit : ProbeClass::Miss;
}

std::vector<int64_t> parse_latency_samples(const std::string& text) {
  std::vector<int64_t> samples;
  size_t begin = 0;
  size_t line_no = 0;
  while (begin < text.size()) {
    size_t end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + begin, end - begin);
    ++line_no;
    begin = end + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line.empty() || line[0] == '#') continue;
    int64_t value = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc() || p != line.data() + line.size() || value <= 0)
      throw DataError("line " + std::to_string(line_no) + ": expected one positive integer latency");
    samples.push_back(value);
  }
  return samples;
}

std::string histogram_csv(std::span<const int64_t> samples) {
  std::map<int64_t, int64_t> counts;
  for (int64_t x : samples) counts[x] += 1;
  std::string out = "latency,count\n";
  for (const auto& [latency, count] : counts) {
    out += std::to_string(latency);
    out += ',';
    out += std::to_string(count);
    out += '\n';
  }
  return out;
}

}  // namespace tracerecon
