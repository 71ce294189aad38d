#pragma once

#include <stdexcept>
#include <string>

namespace vnaff {

// Error taxonomy used across the library. The CLI maps these onto its exit
// code contract (see tools/vnafford.cpp).
struct InvalidRotationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateFrameError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientPointsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoValidProposalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Artifact (dataset/checkpoint/spec/report) failed to load or validate.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training cannot proceed on the given data (e.g. a single-class dataset).
struct TrainingInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vnaff
