#include <doctest.h>
#include <propel/errors.hpp>
#include <propel/nn.hpp>

#include <cmath>

#include "../support/tmpdir.hpp"

using namespace propel;

namespace {

// Straight-line reference forward pass: plain loops, no Eigen.
std::vector<double> ref_forward(const NeuralParams& p,
                                const std::vector<double>& input) {
  std::vector<double> x = input;
  for (size_t l = 0; l < p.W.size(); ++l) {
    std::vector<double> z((size_t)p.W[l].rows(), 0.0);
    for (int i = 0; i < p.W[l].rows(); ++i) {
      double acc = p.b[l][i];
      for (int j = 0; j < p.W[l].cols(); ++j) acc += p.W[l](i, j) * x[(size_t)j];
      z[(size_t)i] = acc;
    }
    bool last = l + 1 == p.W.size();
    for (size_t i = 0; i < z.size(); ++i) {
      if (!last) {
        z[i] = std::tanh(z[i]);
      } else if (p.output == OutputKind::tanh_scaled) {
        double center = 0.5 * (p.out_low[(long)i] + p.out_high[(long)i]);
        double half = 0.5 * (p.out_high[(long)i] - p.out_low[(long)i]);
        z[i] = center + half * std::tanh(z[i]);
      }
    }
    x = z;
  }
  return x;
}

NeuralParams random_net(std::uint64_t seed, int in, std::vector<int> hidden,
                        int out, OutputKind kind) {
  Rng rng = make_rng(seed);
  Vec lo = Vec::Constant(out, -2.0), hi = Vec::Constant(out, 2.0);
  NeuralParams p = kind == OutputKind::tanh_scaled
                       ? make_mlp(in, hidden, out, kind, rng, lo, hi)
                       : make_mlp(in, hidden, out, kind, rng);
  // fan-in init keeps the last layer tiny; rescale so tests see real weights
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (auto& W : p.W)
    for (int i = 0; i < W.rows(); ++i)
      for (int j = 0; j < W.cols(); ++j) W(i, j) = uni(rng);
  for (auto& b : p.b)
    for (int i = 0; i < b.size(); ++i) b[i] = uni(rng);
  return p;
}

double fd_loss(const NeuralParams& p, const Vec& input, const Vec& upstream) {
  return upstream.dot(nn_forward(p, input));
}

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("zero network maps everything to zero") {
  NeuralParams p = random_net(0, 4, {8}, 2, OutputKind::linear);
  for (auto& W : p.W) W.setZero();
  for (auto& b : p.b) b.setZero();
  Vec x(4);
  x << 1, -2, 3, -4;
  CHECK(nn_forward(p, x).isZero(0.0));
}

TEST_CASE("1x1 tanh unit") {
  NeuralParams p;
  p.W.push_back(Eigen::MatrixXd::Constant(1, 1, 1.0));
  p.b.push_back(Vec::Zero(1));
  p.output = OutputKind::tanh_scaled;
  p.out_low = Vec::Constant(1, -1.0);
  p.out_high = Vec::Constant(1, 1.0);
  for (double x : {-2.0, -0.3, 0.0, 0.7, 1.9}) {
    Vec in(1);
    in << x;
    CHECK(nn_forward(p, in)[0] == doctest::Approx(std::tanh(x)).epsilon(1e-15));
  }
}

TEST_CASE("forward matches the straight-line reference evaluator") {
  for (int trial = 0; trial < 20; ++trial) {
    OutputKind kind = trial % 2 ? OutputKind::linear : OutputKind::tanh_scaled;
    NeuralParams p = random_net(100 + trial, 5, {7, 6}, 2, kind);
    Rng rng = make_rng(999 + trial);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    Vec x(5);
    std::vector<double> xin(5);
    for (int i = 0; i < 5; ++i) {
      x[i] = uni(rng);
      xin[(size_t)i] = x[i];
    }
    Vec got = nn_forward(p, x);
    auto want = ref_forward(p, xin);
    for (int d = 0; d < 2; ++d)
      CHECK(std::abs(got[d] - want[(size_t)d]) <= 1e-12);
  }
}

TEST_CASE("backward matches central finite differences") {
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    OutputKind kind = trial % 2 ? OutputKind::linear : OutputKind::tanh_scaled;
    NeuralParams p = random_net(300 + trial, 4, {6, 5}, 2, kind);
    Rng rng = make_rng(4000 + trial);
    std::uniform_real_distribution<double> uni(-1.5, 1.5);
    Vec x(4), up(2);
    for (int i = 0; i < 4; ++i) x[i] = uni(rng);
    for (int i = 0; i < 2; ++i) up[i] = uni(rng);

    ForwardTrace trace;
    nn_forward_traced(p, x, &trace);
    NnGrads grads = NnGrads::zeros_like(p);
    Vec dx = nn_backward(p, x, trace, up, &grads);

    auto rel = [](double a, double f) {
      return std::abs(a - f) / std::max({1e-6, std::abs(a), std::abs(f)});
    };
    for (size_t l = 0; l < p.W.size(); ++l) {
      for (int i = 0; i < p.W[l].rows(); ++i)
        for (int j = 0; j < p.W[l].cols(); ++j) {
          NeuralParams pp = p, pm = p;
          pp.W[l](i, j) += h;
          pm.W[l](i, j) -= h;
          double fd = (fd_loss(pp, x, up) - fd_loss(pm, x, up)) / (2 * h);
          worst = std::max(worst, rel(grads.dW[l](i, j), fd));
        }
      for (int i = 0; i < p.b[l].size(); ++i) {
        NeuralParams pp = p, pm = p;
        pp.b[l][i] += h;
        pm.b[l][i] -= h;
        double fd = (fd_loss(pp, x, up) - fd_loss(pm, x, up)) / (2 * h);
        worst = std::max(worst, rel(grads.db[l][i], fd));
      }
    }
    for (int i = 0; i < 4; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fd = (fd_loss(p, xp, up) - fd_loss(p, xm, up)) / (2 * h);
      worst = std::max(worst, rel(dx[i], fd));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("zero upstream gives all-zero parameter gradients") {
  NeuralParams p = random_net(7, 3, {5}, 2, OutputKind::linear);
  Vec x(3);
  x << 0.1, 0.2, 0.3;
  ForwardTrace trace;
  nn_forward_traced(p, x, &trace);
  NnGrads grads = NnGrads::zeros_like(p);
  nn_backward(p, x, trace, Vec::Zero(2), &grads);
  for (const auto& dW : grads.dW) CHECK(dW.isZero(0.0));
  for (const auto& db : grads.db) CHECK(db.isZero(0.0));
}

TEST_CASE("single linear layer gradient is the outer product") {
  NeuralParams p = random_net(8, 3, {}, 2, OutputKind::linear);
  Vec x(3), up(2);
  x << 1.5, -0.5, 2.0;
  up << 0.7, -1.1;
  ForwardTrace trace;
  nn_forward_traced(p, x, &trace);
  NnGrads grads = NnGrads::zeros_like(p);
  nn_backward(p, x, trace, up, &grads);
  Eigen::MatrixXd outer = up * x.transpose();
  CHECK(grads.dW[0] == outer);
  CHECK(grads.db[0] == up);
}

TEST_CASE("soft update is the exact convex combination") {
  NeuralParams online = random_net(11, 3, {4}, 1, OutputKind::linear);
  NeuralParams target = random_net(12, 3, {4}, 1, OutputKind::linear);
  NeuralParams before = target;
  const double tau = 0.25;
  soft_update(&target, online, tau);
  for (size_t l = 0; l < online.W.size(); ++l) {
    Eigen::MatrixXd want = (1.0 - tau) * before.W[l] + tau * online.W[l];
    CHECK(target.W[l] == want);
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  testsupport::TmpDir tmp("nn");
  for (int trial = 0; trial < 4; ++trial) {
    OutputKind kind = trial % 2 ? OutputKind::linear : OutputKind::tanh_scaled;
    NeuralParams p = random_net(500 + trial, 3, {6, 4}, 2, kind);
    std::string path = tmp.file("net" + std::to_string(trial) + ".nnp");
    save_nn(path, p);
    NeuralParams q = load_nn(path);
    REQUIRE(q.W.size() == p.W.size());
    for (size_t l = 0; l < p.W.size(); ++l) {
      CHECK(q.W[l] == p.W[l]);
      CHECK(q.b[l] == p.b[l]);
    }
    CHECK(q.output == p.output);
    if (kind == OutputKind::tanh_scaled) {
      CHECK(q.out_low == p.out_low);
      CHECK(q.out_high == p.out_high);
    }
  }
}

TEST_CASE("corrupt neural params files are rejected with the path") {
  testsupport::TmpDir tmp("nnbad");
  std::string path = tmp.file("bad.nnp");
  {
    FILE* f = fopen(path.c_str(), "wb");
    fputs("NOPE123456", f);
    fclose(f);
  }
  CHECK_THROWS_AS(load_nn(path), IoError);
  CHECK_THROWS_AS(load_nn(tmp.file("missing.nnp")), IoError);
  try {
    load_nn(path);
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
}

TEST_CASE("replay buffer ring semantics and seeded sampling") {
  ReplayBuffer buf(4);
  for (int i = 0; i < 6; ++i) {
    Transition t;
    t.r = i;
    t.s = Vec::Constant(1, (double)i);
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 4);
  CHECK(buf.inserted() == 6);
  // slots 0 and 1 were overwritten by items 4 and 5
  CHECK(buf.at(0).r == 4.0);
  CHECK(buf.at(1).r == 5.0);
  CHECK(buf.at(2).r == 2.0);

  Rng a = make_rng(33), b = make_rng(33);
  CHECK(buf.sample_indices(16, a) == buf.sample_indices(16, b));
}

TEST_CASE("shape errors are contract errors") {
  NeuralParams p = random_net(1, 3, {4}, 1, OutputKind::linear);
  Vec bad(2);
  bad << 1, 2;
  CHECK_THROWS_AS(nn_forward(p, bad), ContractError);
}

TEST_SUITE_END();
