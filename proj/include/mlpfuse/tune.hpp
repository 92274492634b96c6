#pragma once

#include <cstdint>
#include <variant>

#include "mlpfuse/compress.hpp"
#include "mlpfuse/ntk.hpp"

namespace mlpfuse {

enum class Optimizer { Sgd, Adam };

struct TuneConfig {
  std::size_t steps{100};
  double lr{1e-2};
  Optimizer optimizer{Optimizer::Sgd};
  double beta1{0.9};
  double beta2{0.999};
  double eps_adam{1e-8};

  void validate() const;
};

// Loss per step, with the step-0 initial loss first (length steps+1).
struct LossTrajectory {
  Vector values;
};

// Appendix-style output-error bound certificate:
//   bound = L·(C2·CX + C1·CX)·ε + L·CX·ε².
struct BoundReport {
  double epsilon;   // ‖W − Cᵀ W̃‖_F over sub-MLP embeddings
  double c1;        // ‖W1‖₂
  double c2;        // ‖W2‖₂
  double cx;        // ‖X‖_F
  double lipschitz; // activation Lipschitz constant
  double bound;
  double measured;  // ‖H − H̃_C‖_F
};

// Minimizes the mean layer-output MSE against the teacher by gradient steps
// on (W̃1, b̃1, W̃2) of the fused student; P and b2 stay frozen.
std::pair<CompressedMlp, LossTrajectory> layerwise_tune(
    const MlpWeights& teacher, const CompressedMlp& student,
    const std::vector<Matrix>& inputs, const TuneConfig& cfg);

// Instantiates the output-error bound for a bias-free teacher and a given
// clustering; throws NumericFailure if the measured error exceeds the bound.
BoundReport check_output_bound(const MlpWeights& teacher,
                               const ClusterAssignment& assignment,
                               const Matrix& x);

// Binary classification with logistic loss on the scalar network; trains
// MLP parameters and the readout, full batch, deterministic.
struct ToyModel {
  std::variant<MlpWeights, CompressedMlp> body;
  ScalarHead head;
};

struct ToyDataset {
  std::vector<Matrix> inputs;
  Vector labels;  // ±1
};

// Labels each input by the sign of the reference network's own output.
ToyDataset make_toy_dataset(const MlpWeights& reference, const ScalarHead& head,
                            std::size_t count, std::size_t n, std::uint64_t seed);

LossTrajectory train_toy(ToyModel& model, const ToyDataset& dataset,
                         const TuneConfig& cfg, std::uint64_t seed);

}  // namespace mlpfuse
