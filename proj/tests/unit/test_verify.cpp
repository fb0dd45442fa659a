#include <doctest.h>
#include <propel/errors.hpp>
#include <propel/verify.hpp>

#include <cmath>
#include <functional>

#include "../support/ast_gen.hpp"
#include "../support/tmpdir.hpp"

using namespace propel;

namespace {

ObsBox unit_box(int dim, double integral_bound = 5.0) {
  ObsBox box;
  box.lo = Vec::Constant(dim, -1.0);
  box.hi = Vec::Constant(dim, 1.0);
  box.integral_bound = integral_bound;
  return box;
}

// Lists Pid nodes in evaluation (pre-order) slot order.
void collect_pids(const Expr& e, std::vector<const Expr*>* out) {
  switch (e.kind) {
    case NodeKind::kPid:
      out->push_back(&e);
      break;
    case NodeKind::kClip:
      collect_pids(*e.child, out);
      break;
    case NodeKind::kIf:
      collect_pids(*e.then_branch, out);
      collect_pids(*e.else_branch, out);
      break;
    default:
      break;
  }
}

std::vector<const Expr*> collect_pids(const Program& p) {
  std::vector<const Expr*> pids;
  for (const auto& e : p.dims) collect_pids(*e, &pids);
  return pids;
}

// Samples obs in the box and a consistent accumulator state whose used
// integral lies within the stated bound, then evaluates concretely.
struct ProbeSampler {
  const Program& prog;
  const ObsBox& box;
  double dt;
  Rng rng;

  Vec sample_obs() {
    std::uniform_real_distribution<double> uni01(0.0, 1.0);
    Vec obs(box.lo.size());
    for (int j = 0; j < obs.size(); ++j)
      obs[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * uni01(rng);
    return obs;
  }

  ProgState sample_state(const Vec& obs) {
    std::uniform_real_distribution<double> uni01(0.0, 1.0);
    auto pids = collect_pids(prog);
    ProgState st = make_state(prog);
    for (size_t s = 0; s < pids.size(); ++s) {
      const Expr& e = *pids[s];
      double e_now = e.setpoint - obs[e.feature];
      double prev_obs =
          box.lo[e.feature] +
          (box.hi[e.feature] - box.lo[e.feature]) * uni01(rng);
      double used_integral =
          box.integral_bound * (2.0 * uni01(rng) - 1.0);
      st.slots[s].integral = used_integral - e_now * dt;
      st.slots[s].prev_error = e.setpoint - prev_obs;
      st.slots[s].fresh = false;
    }
    return st;
  }
};

}  // namespace

TEST_SUITE_BEGIN("verify");

TEST_CASE("constant program has a point range") {
  Program p = parse("(const 0.3)");
  auto ranges = output_range(p, unit_box(1), 0.05);
  CHECK(ranges[0].lo == 0.3);
  CHECK(ranges[0].hi == 0.3);
}

TEST_CASE("identity affine over a box reproduces the box") {
  Program p = parse("(affine (1) 0)");
  ObsBox box = unit_box(1);
  box.lo[0] = -1.0;
  box.hi[0] = 2.0;
  auto ranges = output_range(p, box, 0.05);
  CHECK(ranges[0].lo == doctest::Approx(-1.0));
  CHECK(ranges[0].hi == doctest::Approx(2.0));
}

TEST_CASE("proportional pid lipschitz equals kp") {
  Program p = parse("(pid 0 0 2 0 0)");
  LipschitzResult lip = lipschitz_bound(p, unit_box(2), 0.05, 0);
  CHECK(lip.value == doctest::Approx(2.0));
  CHECK(lip.certificates.empty());
}

TEST_CASE("affine lipschitz is the weight vector norm") {
  Program p = parse("(affine (3 -4) 1)");
  LipschitzResult lip = lipschitz_bound(p, unit_box(2), 0.05, 0);
  CHECK(lip.value == doctest::Approx(5.0));
}

TEST_CASE("unbounded integral with nonzero ki is rejected") {
  Program p = parse("(pid 0 0 1 0.5 0)");
  ObsBox box = unit_box(1);
  box.integral_bound = -1.0;
  CHECK_THROWS_AS(output_range(p, box, 0.05), VerifyError);
  box.integral_bound = 2.0;
  CHECK_NOTHROW(output_range(p, box, 0.05));
  // ki = 0 never needs the bound
  Program q = parse("(pid 0 0 1 0 0.2)");
  ObsBox nb = unit_box(1);
  nb.integral_bound = -1.0;
  CHECK_NOTHROW(output_range(q, nb, 0.05));
}

TEST_CASE("monte carlo probes never escape the reported range") {
  const double dt = 0.05;
  int violations = 0;
  for (int pi = 0; pi < 60; ++pi) {
    testsupport::AstGen gen({.obs_dim = 3,
                             .act_dim = 1,
                             .max_depth = 3,
                             .allow_tree = true,
                             .const_range = 5.0},
                            4200 + pi);
    Program prog = gen.program();
    ObsBox box = unit_box(3, 4.0);
    auto ranges = output_range(prog, box, dt);
    ProbeSampler sampler{prog, box, dt, make_rng(991 + pi)};
    for (int i = 0; i < 400; ++i) {
      Vec obs = sampler.sample_obs();
      ProgState st = sampler.sample_state(obs);
      Vec out = eval_step(prog, st, obs, dt);
      for (int d = 0; d < prog.act_dim(); ++d)
        if (!ranges[(size_t)d].contains(out[d], 1e-9)) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("monte carlo difference quotients never exceed L (if-free)") {
  const double dt = 0.05;
  int violations = 0;
  for (int pi = 0; pi < 40; ++pi) {
    testsupport::AstGen gen({.obs_dim = 3,
                             .act_dim = 1,
                             .max_depth = 3,
                             .allow_if = false,
                             .allow_tree = false,
                             .const_range = 5.0},
                            6200 + pi);
    Program prog = gen.program();
    REQUIRE(is_if_free(prog));
    ObsBox box = unit_box(3, 4.0);
    LipschitzResult lip = lipschitz_bound(prog, box, dt, 0);
    ProbeSampler sampler{prog, box, dt, make_rng(123 + pi)};
    for (int i = 0; i < 300; ++i) {
      Vec obs_a = sampler.sample_obs();
      Vec obs_b = sampler.sample_obs();
      if ((obs_a - obs_b).norm() < 1e-9) continue;
      ProgState st = sampler.sample_state(obs_a);
      ProgState st_b = st;  // identical accumulator state
      Vec ua = eval_step(prog, st, obs_a, dt);
      Vec ub = eval_step(prog, st_b, obs_b, dt);
      double ratio = (ua - ub).norm() / (obs_a - obs_b).norm();
      if (ratio > lip.value * (1.0 + 1e-9) + 1e-9) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("growing the box never shrinks the range") {
  for (int pi = 0; pi < 30; ++pi) {
    testsupport::AstGen gen({.obs_dim = 2, .act_dim = 1, .max_depth = 3},
                            8800 + pi);
    Program prog = gen.program();
    ObsBox small = unit_box(2, 3.0);
    ObsBox big = small;
    big.lo.array() -= 0.7;
    big.hi.array() += 0.4;
    auto rs = output_range(prog, small, 0.05);
    auto rb = output_range(prog, big, 0.05);
    for (size_t d = 0; d < rs.size(); ++d) {
      CHECK(rb[d].lo <= rs[d].lo + 1e-12);
      CHECK(rb[d].hi >= rs[d].hi - 1e-12);
    }
  }
}

TEST_CASE("if guards produce jump certificates") {
  Program p = parse("(if 0 0.25 (const -1) (const 3))");
  VerifyReport report = verify_program(p, unit_box(1), 0.05);
  REQUIRE(report.dims[0].discontinuities.size() == 1);
  const Discontinuity& c = report.dims[0].discontinuities[0];
  CHECK(c.feature == 0);
  CHECK(c.threshold == doctest::Approx(0.25));
  CHECK(c.jump_bound >= 4.0 - 1e-12);  // |(-1) - 3|
  // a box entirely on one side resolves the guard: no certificate
  ObsBox right = unit_box(1);
  right.lo[0] = 0.5;
  VerifyReport resolved = verify_program(p, right, 0.05);
  CHECK(resolved.dims[0].discontinuities.empty());
  CHECK(resolved.dims[0].range.lo == 3.0);
}

TEST_CASE("report rendering carries the fixed-state caveat and csv schema") {
  Program p = parse("(actions (const 1) (pid 0 0 2 0 0))");
  VerifyReport report = verify_program(p, unit_box(1), 0.05);
  std::string text = report.render_text();
  CHECK(text.find("fixed accumulator state") != std::string::npos);
  std::string csv = report.render_csv();
  CHECK(csv.find("# schema=1") != std::string::npos);
  CHECK(csv.find("dim,lo,hi,lipschitz,n_discontinuities") != std::string::npos);
}

TEST_CASE("box files load and reject unknown keywords") {
  testsupport::TmpDir tmp("box");
  std::string good = tmp.file("ok.box");
  {
    FILE* f = fopen(good.c_str(), "w");
    fputs("# pendulum box\nobs 0 -1 1\nobs 1 -1 1\nobs 2 -8 8\nintegral 10\ndelta 0.5\n",
          f);
    fclose(f);
  }
  ObsBox box = ObsBox::load(good);
  CHECK(box.lo.size() == 3);
  CHECK(box.integral_bound == doctest::Approx(10.0));
  CHECK(box.delta_error == doctest::Approx(0.5));

  std::string bad = tmp.file("bad.box");
  {
    FILE* f = fopen(bad.c_str(), "w");
    fputs("obs 0 -1 1\nwobble 3\n", f);
    fclose(f);
  }
  CHECK_THROWS_AS(ObsBox::load(bad), ConfigError);
}

TEST_SUITE_END();
