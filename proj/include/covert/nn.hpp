#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covert/rng.hpp"

namespace covert::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fully connected ReLU network over a flat parameter vector.
/// Batches are column-major: one sample per column.
/// Layout per layer: W (out x in, column-major) followed by b (out).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  Eigen::Index num_params() const { return num_params_; }

  /// Weights and biases uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  VectorXd init(Rng& rng) const;

  struct Cache {
    std::vector<MatrixXd> post;  ///< post[0] is the input, post[k] the output of layer k
  };

  MatrixXd forward(const VectorXd& params, const MatrixXd& X, Cache* cache = nullptr) const;

  /// Adds dLoss/dparams to `grad` given dLoss/doutput.
  void backward(const VectorXd& params, const Cache& cache, const MatrixXd& d_out, VectorXd& grad) const;

  /// Offset of the bias block of `layer` in the flat vector.
  Eigen::Index bias_offset(int layer) const;
  Eigen::Index weight_offset(int layer) const;
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index num_params_ = 0;
};

enum class OptimizerKind { Adam, Sgd };

OptimizerKind optimizer_from_name(const std::string& name);
std::string optimizer_name(OptimizerKind k);

/// Adam, or SGD with momentum. Minimizes: params -= lr * update(grad).
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, Eigen::Index n);

  void step(VectorXd& params, const VectorXd& grad, double lr);

  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double max_grad_norm = 0.0;  ///< 0 disables clipping

  VectorXd m;
  VectorXd v;
  long long t = 0;
};

}  // namespace covert::nn
