#include "propel/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "propel/errors.hpp"

namespace propel {

NeuralParams make_mlp(int input_dim, const std::vector<int>& hidden,
                      int output_dim, OutputKind output, Rng& rng,
                      const Vec& out_low, const Vec& out_high) {
  if (input_dim < 1 || output_dim < 1)
    throw ContractError("make_mlp: dimensions must be >= 1");
  NeuralParams p;
  p.output = output;
  if (output == OutputKind::tanh_scaled) {
    if (out_low.size() != output_dim || out_high.size() != output_dim)
      throw ContractError("make_mlp: tanh_scaled needs output bounds");
    p.out_low = out_low;
    p.out_high = out_high;
  }
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(output_dim);
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    bool last = l + 2 == sizes.size();
    double bound = last ? 3e-3 : 1.0 / std::sqrt((double)in);
    std::uniform_real_distribution<double> uni(-bound, bound);
    Eigen::MatrixXd W(out, in);
    Eigen::VectorXd b(out);
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) W(i, j) = uni(rng);
      b[i] = uni(rng);
    }
    p.W.push_back(std::move(W));
    p.b.push_back(std::move(b));
  }
  return p;
}

static void check_shapes(const NeuralParams& p, const Vec& input) {
  if (p.empty()) throw ContractError("nn: empty network");
  if (input.size() != p.input_dim())
    throw ContractError("nn: input size " + std::to_string(input.size()) +
                        " != " + std::to_string(p.input_dim()));
  for (size_t l = 0; l + 1 < p.W.size(); ++l)
    if (p.W[l + 1].cols() != p.W[l].rows())
      throw ContractError("nn: layer shape chain broken at layer " +
                          std::to_string(l));
}

Vec nn_forward_traced(const NeuralParams& p, const Vec& input,
                      ForwardTrace* trace) {
  check_shapes(p, input);
  if (trace) {
    trace->pre.clear();
    trace->post.clear();
  }
  Vec x = input;
  for (size_t l = 0; l < p.W.size(); ++l) {
    Vec z = p.W[l] * x + p.b[l];
    bool last = l + 1 == p.W.size();
    Vec post;
    if (!last) {
      post = z.array().tanh();
    } else if (p.output == OutputKind::linear) {
      post = z;
    } else {
      Vec center = 0.5 * (p.out_low + p.out_high);
      Vec half = 0.5 * (p.out_high - p.out_low);
      post = center.array() + half.array() * z.array().tanh();
    }
    if (trace) {
      trace->pre.push_back(z);
      trace->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

Vec nn_forward(const NeuralParams& p, const Vec& input) {
  return nn_forward_traced(p, input, nullptr);
}

NnGrads NnGrads::zeros_like(const NeuralParams& p) {
  NnGrads g;
  for (size_t l = 0; l < p.W.size(); ++l) {
    g.dW.emplace_back(Eigen::MatrixXd::Zero(p.W[l].rows(), p.W[l].cols()));
    g.db.emplace_back(Eigen::VectorXd::Zero(p.b[l].size()));
  }
  return g;
}

void NnGrads::accumulate(const NnGrads& other, double s) {
  for (size_t l = 0; l < dW.size(); ++l) {
    dW[l] += s * other.dW[l];
    db[l] += s * other.db[l];
  }
}

void NnGrads::scale(double s) {
  for (size_t l = 0; l < dW.size(); ++l) {
    dW[l] *= s;
    db[l] *= s;
  }
}

Vec nn_backward(const NeuralParams& p, const Vec& input,
                const ForwardTrace& trace, const Vec& upstream, NnGrads* grads) {
  if (trace.pre.size() != p.W.size())
    throw ContractError("nn_backward: trace does not match network");
  if (upstream.size() != p.output_dim())
    throw ContractError("nn_backward: upstream size mismatch");
  if (grads->dW.size() != p.W.size())
    throw ContractError("nn_backward: grads not sized for network");

  const long L = (long)p.W.size();
  Vec delta;
  {
    // output layer activation derivative
    const Vec& z = trace.pre[L - 1];
    if (p.output == OutputKind::linear) {
      delta = upstream;
    } else {
      Vec half = 0.5 * (p.out_high - p.out_low);
      Vec t = z.array().tanh();
      delta = (upstream.array() * half.array() * (1.0 - t.array().square()))
                  .matrix();
    }
  }
  for (long l = L - 1; l >= 0; --l) {
    const Vec& x_prev = l == 0 ? input : trace.post[l - 1];
    grads->dW[l] += delta * x_prev.transpose();
    grads->db[l] += delta;
    if (l > 0) {
      Vec back = p.W[l].transpose() * delta;
      const Vec& post = trace.post[l - 1];  // tanh activation
      delta = (back.array() * (1.0 - post.array().square())).matrix();
    } else {
      return p.W[0].transpose() * delta;
    }
  }
  return Vec();
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(NeuralParams* params, const NnGrads& grads) {
  if (mW_.empty()) {
    for (size_t l = 0; l < params->W.size(); ++l) {
      mW_.emplace_back(Eigen::MatrixXd::Zero(params->W[l].rows(), params->W[l].cols()));
      vW_.emplace_back(Eigen::MatrixXd::Zero(params->W[l].rows(), params->W[l].cols()));
      mb_.emplace_back(Eigen::VectorXd::Zero(params->b[l].size()));
      vb_.emplace_back(Eigen::VectorXd::Zero(params->b[l].size()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
  const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
  for (size_t l = 0; l < params->W.size(); ++l) {
    mW_[l] = beta1_ * mW_[l] + (1.0 - beta1_) * grads.dW[l];
    vW_[l] = beta2_ * vW_[l].array().matrix() +
             (1.0 - beta2_) * grads.dW[l].array().square().matrix();
    mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * grads.db[l];
    vb_[l] = beta2_ * vb_[l].array().matrix() +
             (1.0 - beta2_) * grads.db[l].array().square().matrix();
    params->W[l].array() -= lr_ * (mW_[l].array() / bc1) /
                            ((vW_[l].array() / bc2).sqrt() + eps_);
    params->b[l].array() -= lr_ * (mb_[l].array() / bc1) /
                            ((vb_[l].array() / bc2).sqrt() + eps_);
  }
}

void soft_update(NeuralParams* target, const NeuralParams& online, double tau) {
  if (target->W.size() != online.W.size())
    throw ContractError("soft_update: network shape mismatch");
  for (size_t l = 0; l < online.W.size(); ++l) {
    target->W[l] = (1.0 - tau) * target->W[l] + tau * online.W[l];
    target->b[l] = (1.0 - tau) * target->b[l] + tau * online.b[l];
  }
}

// ---------------------------------------------------------------------------
// Serialization: magic "NNP1", u32 layer count, u32 sizes[n+1], u8 output
// kind, then for tanh_scaled the output bounds, then per layer W (row-major)
// and b as little-endian f64.

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = (v >> (8 * i)) & 0xff;
  out.write((const char*)buf, 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char buf[4];
  in.read((char*)buf, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= (std::uint32_t)buf[i] << (8 * i);
  return v;
}

void put_f64(std::ofstream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = (v >> (8 * i)) & 0xff;
  out.write((const char*)buf, 8);
}

double get_f64(std::ifstream& in) {
  unsigned char buf[8];
  in.read((char*)buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= (std::uint64_t)buf[i] << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_nn(const std::string& path, const NeuralParams& p) {
  if (p.empty()) throw ContractError("save_nn: empty network");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out.write("NNP1", 4);
  put_u32(out, (std::uint32_t)p.W.size());
  put_u32(out, (std::uint32_t)p.W.front().cols());
  for (const auto& W : p.W) put_u32(out, (std::uint32_t)W.rows());
  put_u32(out, p.output == OutputKind::linear ? 0u : 1u);
  if (p.output == OutputKind::tanh_scaled) {
    for (int i = 0; i < p.out_low.size(); ++i) put_f64(out, p.out_low[i]);
    for (int i = 0; i < p.out_high.size(); ++i) put_f64(out, p.out_high[i]);
  }
  for (size_t l = 0; l < p.W.size(); ++l) {
    for (int r = 0; r < p.W[l].rows(); ++r)
      for (int c = 0; c < p.W[l].cols(); ++c) put_f64(out, p.W[l](r, c));
    for (int i = 0; i < p.b[l].size(); ++i) put_f64(out, p.b[l][i]);
  }
  if (!out) throw IoError("short write: " + path);
}

NeuralParams load_nn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NNP1", 4) != 0)
    throw IoError("bad magic (want NNP1): " + path);
  NeuralParams p;
  std::uint32_t layers = get_u32(in);
  if (layers == 0 || layers > 64) throw IoError("corrupt layer count: " + path);
  std::vector<std::uint32_t> sizes;
  sizes.push_back(get_u32(in));
  for (std::uint32_t l = 0; l < layers; ++l) sizes.push_back(get_u32(in));
  std::uint32_t out_kind = get_u32(in);
  p.output = out_kind == 0 ? OutputKind::linear : OutputKind::tanh_scaled;
  if (p.output == OutputKind::tanh_scaled) {
    p.out_low = Vec(sizes.back());
    p.out_high = Vec(sizes.back());
    for (auto& v : p.out_low) v = get_f64(in);
    for (auto& v : p.out_high) v = get_f64(in);
  }
  for (std::uint32_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd W(sizes[l + 1], sizes[l]);
    Eigen::VectorXd b(sizes[l + 1]);
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) W(r, c) = get_f64(in);
    for (int i = 0; i < b.size(); ++i) b[i] = get_f64(in);
    p.W.push_back(std::move(W));
    p.b.push_back(std::move(b));
  }
  if (!in) throw IoError("truncated file: " + path);
  return p;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("replay capacity must be > 0");
  data_.reserve(std::min<size_t>(capacity, 1 << 20));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[write_] = std::move(t);
  }
  write_ = (write_ + 1) % capacity_;
  ++inserted_;
}

std::vector<size_t> ReplayBuffer::sample_indices(size_t n, Rng& rng) const {
  if (data_.empty()) throw StateError("sampling an empty replay buffer");
  std::uniform_int_distribution<size_t> uni(0, data_.size() - 1);
  std::vector<size_t> idx(n);
  for (auto& i : idx) i = uni(rng);
  return idx;
}

}  // namespace propel
