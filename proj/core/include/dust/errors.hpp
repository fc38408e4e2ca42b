#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace dust {

/// Malformed input: wrong dimensions, non-finite values, bad hyperparameters.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Too few samples for a statistic (e.g. a bandwidth rule).
class InsufficientData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A physical parameter decoded outside its admissible range.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A computation produced non-finite values. `index` names the offending
/// particle or coordinate when one can be identified.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what,
                            std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(what), index_(index) {}

  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  std::optional<std::size_t> index_;
};

}  // namespace dust
