#pragma once

// Condition predictors f̂_i : X0 ↦ C_i, either a trained network or the
// noiseless analytic map A_i·x used as an oracle substitute.

#include "dguide/mlp.hpp"

#include <memory>

namespace dguide {

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  /// Column-wise evaluation, x is input_dim × n.
  virtual Matrix value(const Matrix& x) const = 0;
  /// Column-wise Jᵀ·cotangent.
  virtual Matrix vjp(const Matrix& x, const Matrix& cotangents) const = 0;

  Vector value(const Vector& x) const { return value(Matrix(x)).col(0); }
};

class LinearPredictor final : public Predictor {
 public:
  explicit LinearPredictor(Matrix a) : a_(std::move(a)) {}
  int input_dim() const override { return static_cast<int>(a_.cols()); }
  int output_dim() const override { return static_cast<int>(a_.rows()); }
  Matrix value(const Matrix& x) const override { return a_ * x; }
  Matrix vjp(const Matrix&, const Matrix& cotangents) const override {
    return a_.transpose() * cotangents;
  }
  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
};

class MlpPredictor final : public Predictor {
 public:
  explicit MlpPredictor(Mlp net) : net_(std::move(net)) {}
  int input_dim() const override { return net_.spec().input_width(); }
  int output_dim() const override { return net_.spec().output_width(); }
  Matrix value(const Matrix& x) const override { return net_.forward(x); }
  Matrix vjp(const Matrix& x, const Matrix& cotangents) const override {
    return net_.grad_input(x, cotangents);
  }
  const Mlp& network() const { return net_; }

 private:
  Mlp net_;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

}  // namespace dguide
