#include "propel/verify.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace propel {

void ObsBox::validate() const {
  if (lo.size() != hi.size() || lo.size() == 0)
    throw ContractError("obs box: bad dimensions");
  for (int i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i])) throw ContractError("obs box: lower > upper at dim " +
                                               std::to_string(i));
}

ObsBox ObsBox::from_spec(const EnvSpec& spec, double integral_bound,
                         double delta_error) {
  ObsBox box;
  box.lo = spec.obs_low;
  box.hi = spec.obs_high;
  box.integral_bound = integral_bound;
  box.delta_error = delta_error;
  box.validate();
  return box;
}

ObsBox ObsBox::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open box file: " + path);
  std::vector<double> lo, hi;
  ObsBox box;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    std::istringstream ss(line);
    std::string kw;
    if (!(ss >> kw)) continue;
    if (kw == "obs") {
      int idx;
      double a, b;
      if (!(ss >> idx >> a >> b))
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected 'obs INDEX LO HI'");
      if (idx != (int)lo.size())
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": obs lines must be consecutive from 0");
      lo.push_back(a);
      hi.push_back(b);
    } else if (kw == "integral") {
      if (!(ss >> box.integral_bound))
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected 'integral BOUND'");
    } else if (kw == "delta") {
      if (!(ss >> box.delta_error))
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected 'delta BOUND'");
    } else {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": unknown keyword '" + kw + "'");
    }
  }
  if (lo.empty()) throw ConfigError(path + ": no obs bounds");
  box.lo = Eigen::Map<Vec>(lo.data(), (long)lo.size());
  box.hi = Eigen::Map<Vec>(hi.data(), (long)hi.size());
  box.validate();
  return box;
}

namespace {

Interval iv(double a, double b) { return {std::min(a, b), std::max(a, b)}; }

Interval iv_add(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }

Interval iv_scale(Interval a, double c) {
  return c >= 0 ? Interval{c * a.lo, c * a.hi} : Interval{c * a.hi, c * a.lo};
}

Interval iv_clip(Interval a, double lo, double hi) {
  return {std::clamp(a.lo, lo, hi), std::clamp(a.hi, lo, hi)};
}

Interval iv_hull(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

double jump_bound(Interval a, Interval b) {
  return std::max(a.hi - b.lo, b.hi - a.lo);
}

struct RangeWalker {
  const ObsBox& box;
  double dt;

  Interval feature_interval(int i) const {
    if (i >= box.lo.size())
      throw ContractError("verify: program reads feature " + std::to_string(i) +
                          " outside the box");
    return {box.lo[i], box.hi[i]};
  }

  Interval tree_range(const TreeNode& n) const {
    if (n.is_leaf) {
      if (!n.affine_leaf) return {n.value, n.value};
      Interval acc{n.leaf_bias, n.leaf_bias};
      for (int j = 0; j < n.leaf_weights.size(); ++j)
        acc = iv_add(acc, iv_scale(feature_interval(j), n.leaf_weights[j]));
      return acc;
    }
    Interval guard = feature_interval(n.feature);
    if (guard.hi < n.threshold) return tree_range(*n.left);
    if (guard.lo >= n.threshold) return tree_range(*n.right);
    return iv_hull(tree_range(*n.left), tree_range(*n.right));
  }

  Interval range(const Expr& e) const {
    switch (e.kind) {
      case NodeKind::kConst:
        return {e.value, e.value};
      case NodeKind::kFeature:
        return feature_interval(e.feature);
      case NodeKind::kAffine: {
        Interval acc{e.bias, e.bias};
        for (int j = 0; j < e.weights.size(); ++j)
          acc = iv_add(acc, iv_scale(feature_interval(j), e.weights[j]));
        return acc;
      }
      case NodeKind::kPid: {
        Interval err = iv_add({e.setpoint, e.setpoint},
                              iv_scale(feature_interval(e.feature), -1.0));
        Interval acc = iv_scale(err, e.kp);
        if (e.ki != 0.0) {
          if (box.integral_bound < 0)
            throw VerifyError(
                "unbounded term: pid integral gain is nonzero but the box "
                "states no integral bound");
          acc = iv_add(acc, iv_scale({-box.integral_bound, box.integral_bound},
                                     e.ki));
        }
        if (e.kd != 0.0) {
          double delta = box.delta_error >= 0 ? box.delta_error : err.width();
          acc = iv_add(acc, iv_scale({-delta / dt, delta / dt}, e.kd));
        }
        return acc;
      }
      case NodeKind::kClip:
        return iv_clip(range(*e.child), e.lo, e.hi);
      case NodeKind::kIf: {
        Interval guard = feature_interval(e.feature);
        if (guard.hi < e.threshold) return range(*e.then_branch);
        if (guard.lo >= e.threshold) return range(*e.else_branch);
        return iv_hull(range(*e.then_branch), range(*e.else_branch));
      }
      case NodeKind::kTree:
        return tree_range(*e.tree);
    }
    return {};
  }

  // Per-observation-dimension bounds on |du/dobs_j| at fixed accumulators;
  // guards the box cannot resolve emit certificates.
  Vec lipschitz(const Expr& e, std::vector<Discontinuity>* certs) const {
    const int d = (int)box.lo.size();
    switch (e.kind) {
      case NodeKind::kConst:
        return Vec::Zero(d);
      case NodeKind::kFeature: {
        Vec c = Vec::Zero(d);
        c[e.feature] = 1.0;
        return c;
      }
      case NodeKind::kAffine: {
        Vec c = Vec::Zero(d);
        for (int j = 0; j < e.weights.size(); ++j) c[j] = std::abs(e.weights[j]);
        return c;
      }
      case NodeKind::kPid: {
        Vec c = Vec::Zero(d);
        c[e.feature] =
            std::abs(e.kp) + std::abs(e.ki) * dt + std::abs(e.kd) / dt;
        return c;
      }
      case NodeKind::kClip:
        return lipschitz(*e.child, certs);  // clipping is 1-Lipschitz
      case NodeKind::kIf: {
        Interval guard = feature_interval(e.feature);
        if (guard.hi < e.threshold) return lipschitz(*e.then_branch, certs);
        if (guard.lo >= e.threshold) return lipschitz(*e.else_branch, certs);
        certs->push_back({e.feature, e.threshold,
                          jump_bound(range(*e.then_branch), range(*e.else_branch))});
        return lipschitz(*e.then_branch, certs)
            .cwiseMax(lipschitz(*e.else_branch, certs));
      }
      case NodeKind::kTree:
        return tree_lipschitz(*e.tree, certs);
    }
    return Vec::Zero(d);
  }

  Vec tree_lipschitz(const TreeNode& n, std::vector<Discontinuity>* certs) const {
    const int d = (int)box.lo.size();
    if (n.is_leaf) {
      Vec c = Vec::Zero(d);
      if (n.affine_leaf)
        for (int j = 0; j < n.leaf_weights.size(); ++j)
          c[j] = std::abs(n.leaf_weights[j]);
      return c;
    }
    Interval guard = feature_interval(n.feature);
    if (guard.hi < n.threshold) return tree_lipschitz(*n.left, certs);
    if (guard.lo >= n.threshold) return tree_lipschitz(*n.right, certs);
    certs->push_back({n.feature, n.threshold,
                      jump_bound(tree_range(*n.left), tree_range(*n.right))});
    return tree_lipschitz(*n.left, certs).cwiseMax(tree_lipschitz(*n.right, certs));
  }
};

bool expr_if_free(const Expr& e) {
  switch (e.kind) {
    case NodeKind::kIf:
      return false;
    case NodeKind::kClip:
      return expr_if_free(*e.child);
    case NodeKind::kTree:
      return e.tree->is_leaf;  // a bare leaf has no guards
    default:
      return true;
  }
}

}  // namespace

bool is_if_free(const Program& prog) {
  for (const auto& e : prog.dims)
    if (!expr_if_free(*e)) return false;
  return true;
}

std::vector<Interval> output_range(const Program& prog, const ObsBox& box,
                                   double dt) {
  box.validate();
  if (!(dt > 0)) throw ContractError("output_range: dt must be > 0");
  RangeWalker walker{box, dt};
  std::vector<Interval> out;
  for (const auto& e : prog.dims) out.push_back(walker.range(*e));
  return out;
}

LipschitzResult lipschitz_bound(const Program& prog, const ObsBox& box,
                                double dt, int action_dim) {
  box.validate();
  if (!(dt > 0)) throw ContractError("lipschitz_bound: dt must be > 0");
  if (action_dim < 0 || action_dim >= prog.act_dim())
    throw ContractError("lipschitz_bound: bad action dim");
  RangeWalker walker{box, dt};
  LipschitzResult result;
  Vec c = walker.lipschitz(*prog.dims[(size_t)action_dim], &result.certificates);
  result.value = c.norm();
  return result;
}

VerifyReport verify_program(const Program& prog, const ObsBox& box, double dt) {
  VerifyReport report;
  report.dt = dt;
  auto ranges = output_range(prog, box, dt);
  for (int d = 0; d < prog.act_dim(); ++d) {
    LipschitzResult lip = lipschitz_bound(prog, box, dt, d);
    report.dims.push_back({ranges[(size_t)d], lip.value, lip.certificates});
  }
  return report;
}

std::string VerifyReport::render_text() const {
  std::ostringstream out;
  out << "# certificates hold at fixed accumulator state (per-step feedback "
         "map), dt="
      << format_double(dt) << "\n";
  for (size_t d = 0; d < dims.size(); ++d) {
    const DimReport& r = dims[d];
    out << "action " << d << ": range [" << format_double(r.range.lo) << ", "
        << format_double(r.range.hi) << "], L <= " << format_double(r.lipschitz);
    if (!r.discontinuities.empty())
      out << " (within branches; " << r.discontinuities.size()
          << " guard discontinuities)";
    out << "\n";
    for (const auto& c : r.discontinuities)
      out << "  guard: feature " << c.feature << " at threshold "
          << format_double(c.threshold) << ", jump <= "
          << format_double(c.jump_bound) << "\n";
  }
  return out.str();
}

std::string VerifyReport::render_csv() const {
  std::ostringstream out;
  out << "# schema=1\n";
  out << "dim,lo,hi,lipschitz,n_discontinuities\n";
  for (size_t d = 0; d < dims.size(); ++d)
    out << d << "," << format_double(dims[d].range.lo) << ","
        << format_double(dims[d].range.hi) << ","
        << format_double(dims[d].lipschitz) << ","
        << dims[d].discontinuities.size() << "\n";
  return out.str();
}

}  // namespace propel
