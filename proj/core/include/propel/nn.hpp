#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "propel/env.hpp"
#include "propel/rng.hpp"

namespace propel {

enum class OutputKind { linear, tanh_scaled };

// Small dense MLP, tanh hidden activations. Output is either linear (critic)
// or tanh rescaled into [out_low, out_high] per dimension (actor).
struct NeuralParams {
  std::vector<Eigen::MatrixXd> W;  // layer l: out x in
  std::vector<Eigen::VectorXd> b;
  OutputKind output = OutputKind::linear;
  Vec out_low, out_high;  // tanh_scaled only

  bool empty() const { return W.empty(); }
  int input_dim() const { return W.empty() ? 0 : (int)W.front().cols(); }
  int output_dim() const { return W.empty() ? 0 : (int)W.back().rows(); }
  int layer_count() const { return (int)W.size(); }
};

// Uniform fan-in init, final layer near zero so a fresh actor starts as an
// almost-null residual.
NeuralParams make_mlp(int input_dim, const std::vector<int>& hidden,
                      int output_dim, OutputKind output, Rng& rng,
                      const Vec& out_low = {}, const Vec& out_high = {});

Vec nn_forward(const NeuralParams& params, const Vec& input);

// Stashed per-layer activations for backprop.
struct ForwardTrace {
  std::vector<Vec> pre;   // z_l
  std::vector<Vec> post;  // activation(z_l); post.back() is the output
};
Vec nn_forward_traced(const NeuralParams& params, const Vec& input,
                      ForwardTrace* trace);

struct NnGrads {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static NnGrads zeros_like(const NeuralParams& params);
  void accumulate(const NnGrads& other, double scale = 1.0);
  void scale(double s);
};

// Backprop of upstream = dL/d(output). Returns dL/d(input); fills `grads`
// with dL/dW, dL/db (accumulated on top of whatever is already there).
Vec nn_backward(const NeuralParams& params, const Vec& input,
                const ForwardTrace& trace, const Vec& upstream, NnGrads* grads);

// Adam with bias correction; one state slot per parameter tensor.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(NeuralParams* params, const NnGrads& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> mW_, vW_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

// target <- (1 - tau) * target + tau * online, per tensor, exactly.
void soft_update(NeuralParams* target, const NeuralParams& online, double tau);

// Little-endian binary format, magic "NNP1". Round-trips bit-exactly.
void save_nn(const std::string& path, const NeuralParams& params);
NeuralParams load_nn(const std::string& path);

// ---------------------------------------------------------------------------
// Replay buffer. pi_s / pi_next carry the program component's output at the
// stored states, recorded at collection time (a stateful program cannot be
// re-evaluated from a bare observation later).
struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
  Vec pi_s;
  Vec pi_next;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);
  void push(Transition t);
  size_t size() const { return data_.size(); }
  size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const Transition& at(size_t i) const { return data_[i]; }
  // n independent uniform draws from the run's generator.
  std::vector<size_t> sample_indices(size_t n, Rng& rng) const;

 private:
  size_t capacity_;
  size_t write_ = 0;
  std::uint64_t inserted_ = 0;
  std::vector<Transition> data_;
};

}  // namespace propel
