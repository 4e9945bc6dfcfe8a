#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tracerecon {

// The ten monitored framework functions. QUERY and GRAD are control-flow
// codes; the remaining eight map 1:1 onto the architecture attributes.
enum class FunctionCode : uint8_t {
  Query = 0,
  Grad = 1,
  Conv = 2,
  Fc = 3,
  Softm = 4,
  Relu = 5,
  Mpool = 6,
  Apool = 7,
  Merge = 8,
  Bias = 9,
};

inline constexpr int kNumFunctionCodes = 10;
inline constexpr int kNumAttributes = 8;

const char* to_string(FunctionCode code);
std::optional<FunctionCode> function_code_from_string(std::string_view name);

inline bool is_attribute_code(FunctionCode code) {
  return code != FunctionCode::Query && code != FunctionCode::Grad;
}

// Index into AttributeVector for an attribute code (CONV -> 0 ... BIAS -> 7).
inline int attribute_index(FunctionCode code) {
  return static_cast<int>(code) - 2;
}

// Per-query counts of the eight attribute codes. Integer-valued for ground
// truth, fractional for averages over observed queries.
struct AttributeVector {
  std::array<double, kNumAttributes> v{};  // convs,fcs,softms,relus,mpools,apools,merges,biases

  static constexpr std::array<const char*, kNumAttributes> kFieldNames = {
      "convs", "fcs", "softms", "relus", "mpools", "apools", "merges", "biases"};

  double& operator[](int i) { return v[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<size_t>(i)]; }

  double& convs() { return v[0]; }
  double& fcs() { return v[1]; }
  double& softms() { return v[2]; }
  double& relus() { return v[3]; }
  double& mpools() { return v[4]; }
  double& apools() { return v[5]; }
  double& merges() { return v[6]; }
  double& biases() { return v[7]; }

  double convs() const { return v[0]; }
  double fcs() const { return v[1]; }
  double softms() const { return v[2]; }
  double relus() const { return v[3]; }
  double mpools() const { return v[4]; }
  double apools() const { return v[5]; }
  double merges() const { return v[6]; }
  double biases() const { return v[7]; }

  double sum() const {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }

  friend bool operator==(const AttributeVector& a, const AttributeVector& b) = default;
};

AttributeVector make_attributes(double convs, double fcs, double softms, double relus,
                                double mpools, double apools, double merges, double biases);

// Sum of absolute per-field deviations between two attribute vectors.
double l1_error(const AttributeVector& a, const AttributeVector& b);

// Shortest decimal string that round-trips through double. Used everywhere a
// number is written to a report or data file, so output bytes are stable.
std::string format_double(double value);

}  // namespace tracerecon
