#pragma once

#include <string>
#include <vector>

#include "propel/dsl.hpp"

namespace propel {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v, double slack = 0.0) const {
    return v >= lo - slack && v <= hi + slack;
  }
};

// Verification domain: per-dimension observation bounds plus bounds on the
// pid accumulator terms. delta_error < 0 derives the per-step error change
// from the error interval width; integral_bound < 0 means no bound was
// stated (output_range then rejects programs with a live integral term).
struct ObsBox {
  Vec lo, hi;
  double delta_error = -1.0;
  double integral_bound = -1.0;

  void validate() const;
  static ObsBox from_spec(const EnvSpec& spec, double integral_bound,
                          double delta_error = -1.0);
  static ObsBox load(const std::string& path);  // "obs i lo hi" lines
};

struct Discontinuity {
  int feature = -1;
  double threshold = 0.0;
  double jump_bound = 0.0;  // sup |then - else| over the box
};

struct DimReport {
  Interval range;
  double lipschitz = 0.0;  // per-branch bound; sound globally when If-free
  std::vector<Discontinuity> discontinuities;
};

struct VerifyReport {
  std::vector<DimReport> dims;
  double dt = 0.0;
  std::string render_text() const;
  std::string render_csv() const;  // per dim: dim, lo, hi, L, n_discontinuities
};

// Sound over-approximation of the program output per action dimension, for
// all observations in the box and accumulators within the stated bounds.
std::vector<Interval> output_range(const Program& prog, const ObsBox& box,
                                   double dt);

struct LipschitzResult {
  double value = 0.0;  // bound on |u(s)-u(s')| / |s-s'|_2 at fixed accumulators
  std::vector<Discontinuity> certificates;  // guards crossing the box
};

// Per action dimension. If/split guards that the box cannot resolve get a
// (threshold, jump bound) certificate; the numeric bound is then only valid
// within a branch.
LipschitzResult lipschitz_bound(const Program& prog, const ObsBox& box,
                                double dt, int action_dim);

VerifyReport verify_program(const Program& prog, const ObsBox& box, double dt);

bool is_if_free(const Program& prog);  // no If nodes and no tree splits

}  // namespace propel
