#include "covert/nn.hpp"

#include <cmath>

#include "covert/errors.hpp"

namespace covert::nn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw ConfigError("mlp: layer sizes must be >= 1");
  }
  Eigen::Index off = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  num_params_ = off;
}

Eigen::Index Mlp::weight_offset(int layer) const { return offsets_.at(static_cast<std::size_t>(layer)); }

Eigen::Index Mlp::bias_offset(int layer) const {
  return weight_offset(layer) + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1];
}

VectorXd Mlp::init(Rng& rng) const {
  VectorXd p(num_params_);
  for (int l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    const Eigen::Index begin = weight_offset(l);
    const Eigen::Index end = bias_offset(l) + sizes_[l + 1];
    for (Eigen::Index i = begin; i < end; ++i) p[i] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return p;
}

MatrixXd Mlp::forward(const VectorXd& params, const MatrixXd& X, Cache* cache) const {
  if (params.size() != num_params_) throw ShapeError("mlp: parameter vector has the wrong length");
  if (X.rows() != input_dim()) throw ShapeError("mlp: input has the wrong dimension");
  if (cache) {
    cache->post.clear();
    cache->post.push_back(X);
  }
  MatrixXd a = X;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::Map<const MatrixXd> W(params.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<const VectorXd> b(params.data() + bias_offset(l), sizes_[l + 1]);
    MatrixXd z = W * a;
    z.colwise() += b;
    if (l + 1 < num_layers()) z = z.cwiseMax(0.0);
    if (cache) cache->post.push_back(z);
    a = std::move(z);
  }
  return a;
}

void Mlp::backward(const VectorXd& params, const Cache& cache, const MatrixXd& d_out, VectorXd& grad) const {
  if (grad.size() != num_params_) throw ShapeError("mlp: gradient vector has the wrong length");
  if (cache.post.size() != sizes_.size()) throw StateError("mlp: backward needs a forward cache");
  MatrixXd dz = d_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const MatrixXd& a_prev = cache.post[static_cast<std::size_t>(l)];
    Eigen::Map<MatrixXd> dW(grad.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<VectorXd> db(grad.data() + bias_offset(l), sizes_[l + 1]);
    dW.noalias() += dz * a_prev.transpose();
    db += dz.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const MatrixXd> W(params.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    MatrixXd da = W.transpose() * dz;
    dz = (a_prev.array() > 0.0).select(da, 0.0);
  }
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

Optimizer::Optimizer(OptimizerKind k, Eigen::Index n) : kind(k), m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}

void Optimizer::step(VectorXd& params, const VectorXd& grad_in, double lr) {
  if (grad_in.size() != params.size() || m.size() != params.size()) throw ShapeError("optimizer: size mismatch");
  VectorXd grad = grad_in;
  if (max_grad_norm > 0) {
    const double norm = grad.norm();
    if (norm > max_grad_norm) grad *= max_grad_norm / norm;
  }
  ++t;
  if (kind == OptimizerKind::Sgd) {
    m = momentum * m + grad;
    params -= lr * m;
    return;
  }
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace covert::nn
