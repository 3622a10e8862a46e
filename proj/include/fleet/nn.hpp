#pragma once

#include "fleet/core.hpp"

#include <random>
#include <vector>

namespace fleet {

// Dense layer. Weight is (out x in); batched inputs are row-major samples, so
// forward is X * W^T + b per row.
struct LinearLayer {
  Matrix weight;
  Vector bias;

  static LinearLayer zeros(int out, int in) {
    LinearLayer l;
    l.weight = Matrix::Zero(out, in);
    l.bias = Vector::Zero(out);
    return l;
  }

  Matrix forward(const Matrix& x) const {
    return (x * weight.transpose()).rowwise() + bias.transpose();
  }
};

struct LinearGrad {
  Matrix weight;
  Vector bias;
};

// Gradient of y = x W^T + b given dL/dy; accumulates into `grad` and returns
// dL/dx.
inline Matrix linear_backward(const LinearLayer& layer, const Matrix& x, const Matrix& dy,
                              LinearGrad& grad) {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias.noalias() += dy.colwise().sum().transpose();
  return dy * layer.weight;
}

// Multi-layer perceptron with tanh hidden activations. When
// `final_activation` is set the last layer output is also passed through
// tanh (used for the latent trunk); otherwise it is linear.
struct Mlp {
  std::vector<LinearLayer> layers;
  bool final_activation = false;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
};

inline Mlp make_mlp(const std::vector<int>& dims, bool final_activation) {
  Mlp m;
  m.final_activation = final_activation;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(LinearLayer::zeros(dims[i + 1], dims[i]));
  }
  return m;
}

// Post-activation outputs of every layer, kept for the backward pass.
struct MlpCache {
  Matrix input;
  std::vector<Matrix> outputs;
};

inline const Matrix& mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache& cache) {
  cache.input = x;
  cache.outputs.resize(mlp.layers.size());
  const Matrix* cur = &cache.input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    cache.outputs[i] = mlp.layers[i].forward(*cur);
    if (i + 1 < mlp.layers.size() || mlp.final_activation) {
      cache.outputs[i] = cache.outputs[i].array().tanh();
    }
    cur = &cache.outputs[i];
  }
  return cache.outputs.back();
}

// Forward without keeping activations (rollout collection path).
inline Matrix mlp_forward(const Mlp& mlp, const Matrix& x) {
  Matrix cur = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    cur = mlp.layers[i].forward(cur);
    if (i + 1 < mlp.layers.size() || mlp.final_activation) cur = cur.array().tanh();
  }
  return cur;
}

struct MlpGrads {
  std::vector<LinearGrad> layers;
};

inline MlpGrads make_mlp_grads(const Mlp& mlp) {
  MlpGrads g;
  g.layers.resize(mlp.layers.size());
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    g.layers[i].weight = Matrix::Zero(mlp.layers[i].weight.rows(), mlp.layers[i].weight.cols());
    g.layers[i].bias = Vector::Zero(mlp.layers[i].bias.size());
  }
  return g;
}

// Backprop dL/d(output) through the cached forward pass; accumulates into
// `grads` and returns dL/d(input).
inline Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& d_output,
                           MlpGrads& grads) {
  Matrix delta = d_output;
  for (int i = static_cast<int>(mlp.layers.size()) - 1; i >= 0; --i) {
    const bool activated = (i + 1 < static_cast<int>(mlp.layers.size())) || mlp.final_activation;
    if (activated) {
      delta = delta.cwiseProduct(
          (1.0 - cache.outputs[static_cast<std::size_t>(i)].array().square()).matrix());
    }
    const Matrix& layer_input = i == 0 ? cache.input : cache.outputs[static_cast<std::size_t>(i - 1)];
    delta = linear_backward(mlp.layers[static_cast<std::size_t>(i)], layer_input, delta,
                            grads.layers[static_cast<std::size_t>(i)]);
  }
  return delta;
}

// Orthogonal initialization: QR of a Gaussian sample, rows orthonormal when
// out <= in (and columns otherwise), scaled by `gain`.
inline void orthogonal_init(Matrix& w, double gain, std::mt19937_64& rng) {
  const bool tall = w.rows() >= w.cols();
  const int rows = tall ? static_cast<int>(w.rows()) : static_cast<int>(w.cols());
  const int cols = tall ? static_cast<int>(w.cols()) : static_cast<int>(w.rows());
  Matrix a(rows, cols);
  std::normal_distribution<double> normal;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Fix the sign ambiguity so the result is deterministic.
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  w = gain * (tall ? q : Matrix(q.transpose()));
}

inline void orthogonal_init(Mlp& mlp, double gain, std::mt19937_64& rng) {
  for (LinearLayer& l : mlp.layers) {
    orthogonal_init(l.weight, gain, rng);
    l.bias.setZero();
  }
}

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam moment pair per tensor; callers pair them up via the same visiting
// order used for gradients.
struct AdamMoments {
  Matrix m_w, v_w;
  Vector m_b, v_b;
};

inline void adam_update_tensor(Eigen::Ref<Matrix> param, const Matrix& grad, Matrix& m, Matrix& v,
                               const AdamConfig& cfg, long t) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param.array() -= cfg.lr * (m.array() / mc) / ((v.array() / vc).sqrt() + cfg.eps);
}

inline void adam_update_tensor(Eigen::Ref<Vector> param, const Vector& grad, Vector& m, Vector& v,
                               const AdamConfig& cfg, long t) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param.array() -= cfg.lr * (m.array() / mc) / ((v.array() / vc).sqrt() + cfg.eps);
}

}  // namespace fleet
