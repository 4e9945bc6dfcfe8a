#include "tracerecon/codes.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace tracerecon {

namespace {
constexpr std::array<const char*, kNumFunctionCodes> kCodeNames = {
    "QUERY", "GRAD", "CONV", "FC", "SOFTM", "RELU", "MPOOL", "APOOL", "MERGE", "BIAS"};
}

const char* to_string(FunctionCode code) { return kCodeNames[static_cast<size_t>(code)]; }

std::optional<FunctionCode> function_code_from_string(std::string_view name) {
  for (int i = 0; i < kNumFunctionCodes; ++i) {
    if (name == kCodeNames[static_cast<size_t>(i)]) return static_cast<FunctionCode>(i);
  }
  return std::nullopt;
}

AttributeVector make_attributes(double convs, double fcs, double softms, double relus,
                                double mpools, double apools, double merges, double biases) {
  AttributeVector a;
  a.v = {convs, fcs, softms, relus, mpools, apools, merges, biases};
  return a;
}

double l1_error(const AttributeVector& a, const AttributeVector& b) {
  double err = 0;
  for (int i = 0; i < kNumAttributes; ++i) err += std::fabs(a.v[static_cast<size_t>(i)] - b.v[static_cast<size_t>(i)]);
  return err;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
  }
  return std::string(buf, end);
}

}  // namespace tracerecon
