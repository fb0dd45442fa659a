#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "propel/env.hpp"

namespace propel {

// ---------------------------------------------------------------------------
// Program AST. One expression per action dimension. Nodes are immutable after
// construction; shared_ptr

enum class NodeKind { kConst, kFeature, kAffine, kPid, kClip, kIf, kTree };

struct TreeNode;
using TreeNodePtr = std::shared_ptr<const TreeNode>;

// Axis-aligned regression tree. Split: feature < threshold goes left,
// ties and greater go right. Leaves are constants, or affine models when
// the class was fit with affine leaves enabled.
struct TreeNode {
  bool is_leaf = true;
  double value = 0.0;  // constant leaf
  bool affine_leaf = false;
  Eigen::VectorXd leaf_weights;  // affine leaf: w . obs + bias
  double leaf_bias = 0.0;
  int feature = -1;  // split
  double threshold = 0.0;
  TreeNodePtr left, right;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  NodeKind kind = NodeKind::kConst;
  double value = 0.0;  // kConst

  int feature = -1;  // kFeature / kPid error input / kIf guard

  Eigen::VectorXd weights;  // kAffine: weights . obs + bias
  double bias = 0.0;

  double setpoint = 0.0, kp = 0.0, ki = 0.0, kd = 0.0;  // kPid

  ExprPtr child;  // kClip
  double lo = 0.0, hi = 0.0;

  double threshold = 0.0;  // kIf: obs[feature] < threshold ? then : else
  ExprPtr then_branch, else_branch;

  TreeNodePtr tree;  // kTree
};

struct Program {
  std::vector<ExprPtr> dims;  // one root expression per action dimension
  int act_dim() const { return static_cast<int>(dims.size()); }
};

// Per-Pid-node accumulators, in pre-order across dims. Zeroed at episode
// start; `fresh` implements the first-step rule (derivative term 0 at t0).
struct PidSlot {
  double integral = 0.0;
  double prev_error = 0.0;
  bool fresh = true;
};

struct ProgState {
  std::vector<PidSlot> slots;
};

enum class ClassKind { pid_dsl, tree };

struct ClassConfig {
  ClassKind kind = ClassKind::pid_dsl;
  int max_depth = 6;                   // tree class
  int min_leaf = 1;                    // tree class: fewest rows per leaf
  bool affine_leaves = false;          // tree class
  std::vector<int> feature_whitelist;  // empty = all features splittable
};

// ---------------------------------------------------------------------------
// Parse / print. Concrete syntax is S-expressions, one program per file,
// "#" starts a line comment. Multi-dimensional programs wrap the roots in
// (actions e0 e1 ...); a bare expression is a 1-D program.

// max_feature < 0 disables feature range checking at parse time.
Program parse(const std::string& text, int max_feature = -1);
std::string pretty_print(const Program& prog);

Program load_program(const std::string& path, int max_feature = -1);
void save_program(const std::string& path, const Program& prog);

// Structural equality, exact on all numeric payloads.
bool structurally_equal(const Program& a, const Program& b);

// Throws ContractError when a feature index is out of range for obs_dim.
void validate_features(const Program& prog, int obs_dim);

int pid_slot_count(const Program& prog);
ProgState make_state(const Program& prog);
int max_feature_index(const Program& prog);  // -1 when no feature reads

// ---------------------------------------------------------------------------
// Evaluation. Advances every Pid accumulator exactly once per call (both If
// branches are evaluated; the guard only selects the returned value), so
// integral state stays well-defined when guards flip between steps.

Vec eval_step(const Program& prog, ProgState& state, const Vec& obs, double dt);

// ---------------------------------------------------------------------------
// Linearization for least-squares projection. Free parameters are, per
// action dimension in pre-order: Const values, Affine weights then bias,
// Pid (kp, ki, kd). Setpoints, guards and tree structure stay fixed. Clip
// and Tree nodes are rejected (output would not be linear in parameters).

struct PidContext {
  double error = 0.0;
  double integral = 0.0;  // value used this step (after the e*dt update)
  double deriv = 0.0;
};

struct StepLinearization {
  std::vector<double> fixed;            // per action dim
  std::vector<Eigen::VectorXd> coeffs;  // per action dim, one per free param
  std::vector<PidContext> pid_context;  // per pid slot, program order
};

int free_param_count(const Program& prog, int dim);
Eigen::VectorXd free_params(const Program& prog, int dim);
Program with_free_params(const Program& prog,
                         const std::vector<Eigen::VectorXd>& params_per_dim);

// Advances `state` exactly like eval_step on the same inputs.
StepLinearization linearize_step(const Program& prog, ProgState& state,
                                 const Vec& obs, double dt);

// Rebuilds design-row coefficients from recorded pid contexts (program
// order) without touching any accumulator. Context count must equal the
// program's pid slot count.
StepLinearization linearize_with_context(const Program& prog, const Vec& obs,
                                         const std::vector<PidContext>& context);

// ---------------------------------------------------------------------------
// CART. Greedy axis-aligned splits minimizing sum of squared errors, one
// tree per action dimension, constant leaves (mean action) by default.

struct TreeFitResult {
  Program program;
  double sse = 0.0;  // training SSE summed over action dims
};

TreeFitResult fit_tree(const Eigen::MatrixXd& obs_rows,
                       const Eigen::MatrixXd& act_rows, const ClassConfig& cfg);

}  // namespace propel
