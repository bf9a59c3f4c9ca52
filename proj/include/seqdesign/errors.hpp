#pragma once

#include <stdexcept>
#include <string>

namespace seqdesign {

// Malformed model structure or dimension mismatch.
struct StructuralError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Value outside the admissible domain (e.g. a response not in {0,1}).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Operation invoked out of protocol order.
struct SequencingError : std::logic_error {
  using std::logic_error::logic_error;
};

// Caller violated a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Input stream or file is short or malformed.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, int iterations)
      : std::runtime_error(what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

}  // namespace seqdesign
