#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmsde {

/// One optimizer iteration of a theta-inference loop.
struct TraceEntry {
  int iter = 0;
  Eigen::VectorXd theta;
  double objective = 0.0;  // MMD^2_u for MaRS, critic objective for AReS
};

using TraceSink = std::function<void(const TraceEntry&)>;

struct InferenceResult {
  Eigen::VectorXd theta;
  std::vector<TraceEntry> trace;
};

/// Thrown when |theta| leaves the representable range; carries the trace so far.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<TraceEntry> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  std::vector<TraceEntry> trace_;
};

inline constexpr double kDivergenceBound = 1e6;

}  // namespace gmsde
