#pragma once

#include <stdexcept>
#include <string>

namespace tracerecon {

// Violated precondition or operation contract. Maps to CLI exit code 1.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or malformed input data. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tracerecon
