#pragma once

#include <stdexcept>
#include <string>

namespace albalance {

enum class ErrorCode {
  kIo,
  kMalformedHeader,
  kTruncatedData,
  kRowCountMismatch,
  kNonFinite,
  kMalformedLabels,
  kLabelOutOfRange,
  kEmptyDataset,
  kUnknownId,
  kAlreadyLabeled,
  kDuplicateId,
  kCountExceedsPool,
  kEmptyInput,
  kAllZeroCounts,
  kInfeasibleTarget,
  kTargetUnreachable,
  kCountsExceedAvailability,
  kTooFewClasses,
  kDiverged,
  kSingleClassModel,
  kClassAbsent,
  kDegenerateFold,
  kCountExceedsCandidates,
  kMissingModel,
  kEmptyLabeledSet,
  kUnknownName,
  kInvalidConfig,
  kMismatchedRecords,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace albalance
