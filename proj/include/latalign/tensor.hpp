#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "latalign/errors.hpp"
#include "latalign/rng.hpp"

namespace latalign {

/// Dense row-major matrix of doubles; vectors are stored as n×1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// y = W·x
inline void matvec(const Matrix& W, const std::vector<double>& x, std::vector<double>& y) {
  if (static_cast<int>(x.size()) != W.cols)
    throw invalid_input_error("matvec: dimension mismatch");
  y.assign(static_cast<std::size_t>(W.rows), 0.0);
  for (int r = 0; r < W.rows; ++r) {
    double acc = 0.0;
    const double* row = &W.data[static_cast<std::size_t>(r) * W.cols];
    for (int c = 0; c < W.cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = acc;
  }
}

/// y = Wᵀ·x
inline void matvec_t(const Matrix& W, const std::vector<double>& x, std::vector<double>& y) {
  if (static_cast<int>(x.size()) != W.rows)
    throw invalid_input_error("matvec_t: dimension mismatch");
  y.assign(static_cast<std::size_t>(W.cols), 0.0);
  for (int r = 0; r < W.rows; ++r) {
    const double xr = x[static_cast<std::size_t>(r)];
    const double* row = &W.data[static_cast<std::size_t>(r) * W.cols];
    for (int c = 0; c < W.cols; ++c) y[static_cast<std::size_t>(c)] += row[c] * xr;
  }
}

/// G += u·vᵀ (gradient accumulation for a weight matrix)
inline void add_outer(Matrix& G, const std::vector<double>& u, const std::vector<double>& v) {
  if (G.rows != static_cast<int>(u.size()) || G.cols != static_cast<int>(v.size()))
    throw invalid_input_error("add_outer: dimension mismatch");
  for (int r = 0; r < G.rows; ++r) {
    double* row = &G.data[static_cast<std::size_t>(r) * G.cols];
    const double ur = u[static_cast<std::size_t>(r)];
    for (int c = 0; c < G.cols; ++c) row[c] += ur * v[static_cast<std::size_t>(c)];
  }
}

/// Model hyperparameters; frozen into checkpoints.
struct Hyper {
  int d_in = 13;      // raw per-unit feature width
  int d_embed = 16;   // unit embedding width (the d of t = ⟨x̃, x⟩/√d)
  int h_embed = 32;   // embedder hidden width
  int h1 = 64;        // predictor hidden widths
  int h2 = 64;
  int g_dim = 2;      // global-info width appended to the fused context
  int grid = 6;       // intention grid side G (G² cells)
  int n_avg = 4;      // Dirichlet draws averaged per stochastic forward
  int B = 4;          // shape augmentation boost
  double c_conc = 1.0;      // α = c_conc · sparsemax(t)
  double kl_weight = 0.5;   // ELBO KL coefficient
  double alpha_floor = 1e-6;
  double lambda_int = 0.5;  // intention-head loss weight
};

/// Named, shaped tensors; the single source of truth for the model's
/// parameters, their gradients (same keys), and optimizer state.
struct ParameterStore {
  Hyper hyper;
  std::map<std::string, Matrix> tensors;

  Matrix& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw invalid_input_error("unknown tensor: " + name);
    return it->second;
  }
  const Matrix& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw invalid_input_error("unknown tensor: " + name);
    return it->second;
  }
};

/// Declares every tensor of the model at its shape, zero-filled.
/// The embedder input is d_in + 2: two hero-relative position columns are
/// derived from the raw features before the shared MLP (see embed_units).
inline ParameterStore make_model_params(const Hyper& h) {
  ParameterStore p;
  p.hyper = h;
  const int d_aug = h.d_in + 2;
  p.tensors["embed.W1"] = Matrix(h.h_embed, d_aug);
  p.tensors["embed.b1"] = Matrix(h.h_embed, 1);
  p.tensors["embed.W2"] = Matrix(h.d_embed, h.h_embed);
  p.tensors["embed.b2"] = Matrix(h.d_embed, 1);
  p.tensors["pred.W1"] = Matrix(h.h1, h.d_embed + h.g_dim);
  p.tensors["pred.b1"] = Matrix(h.h1, 1);
  p.tensors["pred.W2"] = Matrix(h.h2, h.h1);
  p.tensors["pred.b2"] = Matrix(h.h2, 1);
  p.tensors["head.level1.W"] = Matrix(3, h.h2);
  p.tensors["head.level1.b"] = Matrix(3, 1);
  p.tensors["head.move.W"] = Matrix(8, h.h2);
  p.tensors["head.move.b"] = Matrix(8, 1);
  p.tensors["head.intent.W"] = Matrix(h.grid * h.grid, h.h2);
  p.tensors["head.intent.b"] = Matrix(h.grid * h.grid, 1);
  // Pointer head: target logits are ⟨X_i, W·hidden⟩/√d, so the tensor maps
  // hidden state to embedding space; no bias (indices live in the units).
  p.tensors["head.target.W"] = Matrix(h.d_embed, h.h2);
  return p;
}

/// Gaussian init, scaled by scale/√fan_in per tensor; biases stay zero.
inline void init_model_params(ParameterStore& p, RngStream& rng, double scale) {
  for (auto& [name, m] : p.tensors) {
    if (m.cols == 1) continue;  // bias
    const double s = scale / std::sqrt(static_cast<double>(m.cols));
    for (double& v : m.data) v = s * rng.normal();
  }
}

inline ParameterStore zeros_like(const ParameterStore& p) {
  ParameterStore z;
  z.hyper = p.hyper;
  for (const auto& [name, m] : p.tensors) z.tensors[name] = Matrix(m.rows, m.cols);
  return z;
}

inline void accumulate(ParameterStore& into, const ParameterStore& g, double factor = 1.0) {
  for (auto& [name, m] : into.tensors) {
    const Matrix& src = g.at(name);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] += factor * src.data[i];
  }
}

inline void scale_params(ParameterStore& p, double factor) {
  for (auto& [name, m] : p.tensors)
    for (double& v : m.data) v *= factor;
}

/// Classical momentum SGD; velocity lives beside the parameters and is
/// created lazily on the first step.
struct SgdOptimizer {
  ParameterStore velocity;
  bool initialized = false;

  void step(ParameterStore& params, const ParameterStore& grads, double lr,
            double momentum) {
    if (!(lr > 0.0) && lr != 0.0) throw invalid_input_error("sgd: bad learning rate");
    if (momentum < 0.0 || momentum >= 1.0)
      throw invalid_input_error("sgd: momentum must be in [0, 1)");
    if (!initialized) {
      velocity = zeros_like(params);
      initialized = true;
    }
    for (auto& [name, m] : params.tensors) {
      const Matrix& g = grads.at(name);
      Matrix& v = velocity.at(name);
      if (g.rows != m.rows || g.cols != m.cols)
        throw invalid_input_error("sgd: shape mismatch for " + name);
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (std::isnan(g.data[i]))
          throw evaluation_error("sgd: NaN gradient in tensor " + name);
        v.data[i] = momentum * v.data[i] - lr * g.data[i];
        m.data[i] += v.data[i];
      }
    }
  }
};

}  // namespace latalign
