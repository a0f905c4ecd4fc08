#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "dissip/common.hpp"

namespace dissip {

/** One dense layer: y = W x + b. */
struct Layer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

/** Per-parameter gradient buffers matching an Mlp's shapes. */
struct GradTape {
  std::vector<Layer> g;
  Eigen::VectorXd dx;  // gradient with respect to the network input

  GradTape& operator+=(const GradTape& other);
  GradTape& operator*=(double scale);
  bool finite() const;
};

/**
 * Minimal feedforward network: ReLU hidden layers, identity output by
 * default, optional hard-clip output squash. All math in 64-bit floats;
 * forward/backward are pure functions of (parameters, input).
 */
class Mlp {
 public:
  Mlp() = default;

  /** dims = {input, hidden..., output}; He-style uniform initialization. */
  Mlp(const std::vector<int>& dims, Rng& rng);

  int input_dim() const;
  int output_dim() const;

  /** Enable hard-clip squash on the output layer. */
  void set_output_clamp(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  /**
   * Reverse-mode gradients of upstream . forward(x) with respect to every
   * parameter (and the input). ReLU subgradient at 0 is taken as 0.
   */
  GradTape backward(const Eigen::VectorXd& x,
                    const Eigen::VectorXd& upstream) const;

  /** Same gradients, accumulated in place (no per-call tape allocation). */
  void backward_accum(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream,
                      GradTape& tape) const;

  /** Zero-filled tape with this network's shapes. */
  GradTape zero_tape() const;

  /** Versioned binary serialization; round-trips are bit-exact. */
  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

  /** FNV-1a hash over the exact parameter bytes. */
  std::uint64_t param_hash() const;

  std::vector<Layer> layers;
  bool has_clamp = false;
  Eigen::VectorXd clamp_lo, clamp_hi;
};

/** Plain gradient-descent update: p -= lr * g. */
void sgd_step(Mlp& net, const GradTape& tape, double lr);

/** Adam optimizer state for an Mlp (bias-corrected first/second moments). */
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(Mlp& net, const GradTape& tape);
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Layer> m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

/** Adam state for a raw parameter vector (e.g. a log-std vector). */
class AdamVec {
 public:
  AdamVec() = default;
  AdamVec(int dim, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8);
  void step(Eigen::VectorXd& param, const Eigen::VectorXd& grad);
  void set_lr(double lr) { lr_ = lr; }

 private:
  Eigen::VectorXd m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace dissip
