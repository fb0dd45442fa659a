#include "propel/dsl.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>

#include "propel/csv.hpp"
#include "propel/errors.hpp"

namespace propel {

// ---------------------------------------------------------------------------
// Lexer

namespace {

struct Token {
  enum Kind { kLParen, kRParen, kAtom, kEnd } kind;
  std::string text;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> tokens;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\n' || c == ' ' || c == '\t' || c == '\r') {
        advance();
        continue;
      }
      if (c == '(') {
        tokens.push_back({Token::kLParen, "(", line_, col_});
        advance();
        continue;
      }
      if (c == ')') {
        tokens.push_back({Token::kRParen, ")", line_, col_});
        advance();
        continue;
      }
      int line = line_, col = col_;
      std::string atom;
      while (pos_ < text_.size() && !std::isspace((unsigned char)text_[pos_]) &&
             text_[pos_] != '(' && text_[pos_] != ')' && text_[pos_] != '#') {
        atom.push_back(text_[pos_]);
        advance();
      }
      tokens.push_back({Token::kAtom, atom, line, col});
    }
    tokens.push_back({Token::kEnd, "", line_, col_});
    return tokens;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(std::vector<Token> tokens, int max_feature)
      : tokens_(std::move(tokens)), max_feature_(max_feature) {}

  Program parse_program() {
    const Token& t = peek();
    if (t.kind == Token::kEnd) fail(t, "empty program");
    Program prog;
    if (t.kind == Token::kLParen && peek(1).kind == Token::kAtom &&
        peek(1).text == "actions") {
      next();  // (
      next();  // actions
      while (peek().kind != Token::kRParen) {
        if (peek().kind == Token::kEnd) fail(peek(), "unclosed (actions ...)");
        prog.dims.push_back(parse_expr());
      }
      next();  // )
      if (prog.dims.empty()) fail(t, "(actions ...) needs at least one expression");
    } else {
      prog.dims.push_back(parse_expr());
    }
    if (peek().kind != Token::kEnd)
      fail(peek(), "trailing input after program");
    return prog;
  }

 private:
  [[noreturn]] void fail(const Token& t, const std::string& msg) {
    throw ParseError(t.line, t.col, msg);
  }

  const Token& peek(int ahead = 0) const {
    size_t i = std::min(pos_ + ahead, tokens_.size() - 1);
    return tokens_[i];
  }
  const Token& next() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }

  void expect_rparen(const Token& open, const std::string& node) {
    const Token& t = next();
    if (t.kind != Token::kRParen)
      fail(t, node + ": too many arguments (expected ')')");
    (void)open;
  }

  double parse_number(const std::string& node) {
    const Token& t = next();
    if (t.kind != Token::kAtom) fail(t, node + ": expected a number");
    const char* s = t.text.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end != s + t.text.size() || t.text.empty())
      fail(t, node + ": malformed number '" + t.text + "'");
    if (!std::isfinite(v))
      fail(t, node + ": number must be finite, got '" + t.text + "'");
    return v;
  }

  int parse_feature_index(const std::string& node) {
    const Token& t = next();
    if (t.kind != Token::kAtom) fail(t, node + ": expected a feature index");
    for (char c : t.text)
      if (!std::isdigit((unsigned char)c))
        fail(t, node + ": feature index must be a non-negative integer, got '" +
                 t.text + "'");
    long idx = std::strtol(t.text.c_str(), nullptr, 10);
    if (max_feature_ >= 0 && idx > max_feature_)
      fail(t, node + ": feature index " + std::to_string(idx) +
               " out of range (max " + std::to_string(max_feature_) + ")");
    return static_cast<int>(idx);
  }

  ExprPtr parse_expr() {
    const Token& open = next();
    if (open.kind != Token::kLParen) fail(open, "expected '('");
    const Token& head = next();
    if (head.kind != Token::kAtom) fail(head, "expected a node name");
    const std::string& name = head.text;
    auto node = std::make_shared<Expr>();
    if (name == "const") {
      node->kind = NodeKind::kConst;
      node->value = parse_number("const");
      expect_rparen(open, "const");
    } else if (name == "feature") {
      node->kind = NodeKind::kFeature;
      node->feature = parse_feature_index("feature");
      expect_rparen(open, "feature");
    } else if (name == "affine") {
      node->kind = NodeKind::kAffine;
      const Token& wopen = next();
      if (wopen.kind != Token::kLParen)
        fail(wopen, "affine: expected '(' weight list");
      std::vector<double> w;
      while (peek().kind != Token::kRParen) {
        if (peek().kind == Token::kEnd) fail(peek(), "affine: unclosed weight list");
        w.push_back(parse_number("affine"));
      }
      next();  // )
      if (w.empty()) fail(wopen, "affine: weight list must be non-empty");
      node->weights = Eigen::Map<Eigen::VectorXd>(w.data(), (long)w.size());
      node->bias = parse_number("affine");
      expect_rparen(open, "affine");
    } else if (name == "pid") {
      node->kind = NodeKind::kPid;
      node->feature = parse_feature_index("pid");
      node->setpoint = parse_number("pid");
      node->kp = parse_number("pid");
      node->ki = parse_number("pid");
      node->kd = parse_number("pid");
      expect_rparen(open, "pid");
    } else if (name == "clip") {
      node->kind = NodeKind::kClip;
      node->child = parse_expr();
      node->lo = parse_number("clip");
      node->hi = parse_number("clip");
      if (!(node->lo < node->hi))
        fail(open, "clip: lower bound must be < upper bound");
      expect_rparen(open, "clip");
    } else if (name == "if") {
      node->kind = NodeKind::kIf;
      node->feature = parse_feature_index("if");
      node->threshold = parse_number("if");
      node->then_branch = parse_expr();
      node->else_branch = parse_expr();
      expect_rparen(open, "if");
    } else if (name == "tree") {
      node->kind = NodeKind::kTree;
      node->tree = parse_tree_node();
      expect_rparen(open, "tree");
    } else {
      fail(head, "unknown node '" + name + "'");
    }
    return node;
  }

  TreeNodePtr parse_tree_node() {
    const Token& open = next();
    if (open.kind != Token::kLParen) fail(open, "tree: expected '('");
    const Token& head = next();
    if (head.kind != Token::kAtom) fail(head, "tree: expected leaf|split");
    auto node = std::make_shared<TreeNode>();
    if (head.text == "leaf") {
      node->is_leaf = true;
      if (peek().kind == Token::kLParen) {
        // (leaf (affine (...) b))
        const Token& aopen = next();
        const Token& ahead = next();
        if (ahead.kind != Token::kAtom || ahead.text != "affine")
          fail(ahead, "leaf: expected a number or (affine ...)");
        node->affine_leaf = true;
        const Token& wopen = next();
        if (wopen.kind != Token::kLParen)
          fail(wopen, "affine: expected '(' weight list");
        std::vector<double> w;
        while (peek().kind != Token::kRParen) {
          if (peek().kind == Token::kEnd)
            fail(peek(), "affine: unclosed weight list");
          w.push_back(parse_number("affine"));
        }
        next();  // )
        if (w.empty()) fail(wopen, "affine: weight list must be non-empty");
        node->leaf_weights = Eigen::Map<Eigen::VectorXd>(w.data(), (long)w.size());
        node->leaf_bias = parse_number("affine");
        expect_rparen(aopen, "affine");
      } else {
        node->value = parse_number("leaf");
      }
      expect_rparen(open, "leaf");
    } else if (head.text == "split") {
      node->is_leaf = false;
      node->feature = parse_feature_index("split");
      node->threshold = parse_number("split");
      node->left = parse_tree_node();
      node->right = parse_tree_node();
      expect_rparen(open, "split");
    } else {
      fail(head, "tree: unknown node '" + head.text + "' (expected leaf|split)");
    }
    return node;
  }

  std::vector<Token> tokens_;
  size_t pos_ = 0;
  int max_feature_;
};

}  // namespace

Program parse(const std::string& text, int max_feature) {
  Lexer lex(text);
  Parser parser(lex.run(), max_feature);
  return parser.parse_program();
}

Program load_program(const std::string& path, int max_feature) {
  return parse(read_text_file(path), max_feature);
}

void save_program(const std::string& path, const Program& prog) {
  write_text_file(path, pretty_print(prog) + "\n");
}

// ---------------------------------------------------------------------------
// Pretty printer. parse(pretty_print(p)) is structurally identical to p.

namespace {

void print_tree_node(std::ostringstream& out, const TreeNode& n) {
  if (n.is_leaf) {
    if (n.affine_leaf) {
      out << "(leaf (affine (";
      for (int i = 0; i < n.leaf_weights.size(); ++i)
        out << (i ? " " : "") << format_double(n.leaf_weights[i]);
      out << ") " << format_double(n.leaf_bias) << "))";
    } else {
      out << "(leaf " << format_double(n.value) << ")";
    }
    return;
  }
  out << "(split " << n.feature << " " << format_double(n.threshold) << " ";
  print_tree_node(out, *n.left);
  out << " ";
  print_tree_node(out, *n.right);
  out << ")";
}

void print_expr(std::ostringstream& out, const Expr& e) {
  switch (e.kind) {
    case NodeKind::kConst:
      out << "(const " << format_double(e.value) << ")";
      break;
    case NodeKind::kFeature:
      out << "(feature " << e.feature << ")";
      break;
    case NodeKind::kAffine:
      out << "(affine (";
      for (int i = 0; i < e.weights.size(); ++i)
        out << (i ? " " : "") << format_double(e.weights[i]);
      out << ") " << format_double(e.bias) << ")";
      break;
    case NodeKind::kPid:
      out << "(pid " << e.feature << " " << format_double(e.setpoint) << " "
          << format_double(e.kp) << " " << format_double(e.ki) << " "
          << format_double(e.kd) << ")";
      break;
    case NodeKind::kClip:
      out << "(clip ";
      print_expr(out, *e.child);
      out << " " << format_double(e.lo) << " " << format_double(e.hi) << ")";
      break;
    case NodeKind::kIf:
      out << "(if " << e.feature << " " << format_double(e.threshold) << " ";
      print_expr(out, *e.then_branch);
      out << " ";
      print_expr(out, *e.else_branch);
      out << ")";
      break;
    case NodeKind::kTree:
      out << "(tree ";
      print_tree_node(out, *e.tree);
      out << ")";
      break;
  }
}

}  // namespace

std::string pretty_print(const Program& prog) {
  std::ostringstream out;
  if (prog.dims.size() == 1) {
    print_expr(out, *prog.dims[0]);
  } else {
    out << "(actions";
    for (const auto& e : prog.dims) {
      out << " ";
      print_expr(out, *e);
    }
    out << ")";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Structure walks

namespace {

bool tree_equal(const TreeNode& a, const TreeNode& b) {
  if (a.is_leaf != b.is_leaf) return false;
  if (a.is_leaf) {
    if (a.affine_leaf != b.affine_leaf) return false;
    if (a.affine_leaf)
      return a.leaf_weights.size() == b.leaf_weights.size() &&
             a.leaf_weights == b.leaf_weights && a.leaf_bias == b.leaf_bias;
    return a.value == b.value;
  }
  return a.feature == b.feature && a.threshold == b.threshold &&
         tree_equal(*a.left, *b.left) && tree_equal(*a.right, *b.right);
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::kConst:
      return a.value == b.value;
    case NodeKind::kFeature:
      return a.feature == b.feature;
    case NodeKind::kAffine:
      return a.weights.size() == b.weights.size() && a.weights == b.weights &&
             a.bias == b.bias;
    case NodeKind::kPid:
      return a.feature == b.feature && a.setpoint == b.setpoint &&
             a.kp == b.kp && a.ki == b.ki && a.kd == b.kd;
    case NodeKind::kClip:
      return a.lo == b.lo && a.hi == b.hi && expr_equal(*a.child, *b.child);
    case NodeKind::kIf:
      return a.feature == b.feature && a.threshold == b.threshold &&
             expr_equal(*a.then_branch, *b.then_branch) &&
             expr_equal(*a.else_branch, *b.else_branch);
    case NodeKind::kTree:
      return tree_equal(*a.tree, *b.tree);
  }
  return false;
}

void walk_max_feature(const Expr& e, int* mx) {
  switch (e.kind) {
    case NodeKind::kConst:
      break;
    case NodeKind::kFeature:
      *mx = std::max(*mx, e.feature);
      break;
    case NodeKind::kAffine:
      *mx = std::max(*mx, (int)e.weights.size() - 1);
      break;
    case NodeKind::kPid:
      *mx = std::max(*mx, e.feature);
      break;
    case NodeKind::kClip:
      walk_max_feature(*e.child, mx);
      break;
    case NodeKind::kIf:
      *mx = std::max(*mx, e.feature);
      walk_max_feature(*e.then_branch, mx);
      walk_max_feature(*e.else_branch, mx);
      break;
    case NodeKind::kTree: {
      std::function<void(const TreeNode&)> walk = [&](const TreeNode& n) {
        if (n.is_leaf) {
          if (n.affine_leaf) *mx = std::max(*mx, (int)n.leaf_weights.size() - 1);
          return;
        }
        *mx = std::max(*mx, n.feature);
        walk(*n.left);
        walk(*n.right);
      };
      walk(*e.tree);
      break;
    }
  }
}

int count_pids(const Expr& e) {
  switch (e.kind) {
    case NodeKind::kPid:
      return 1;
    case NodeKind::kClip:
      return count_pids(*e.child);
    case NodeKind::kIf:
      return count_pids(*e.then_branch) + count_pids(*e.else_branch);
    default:
      return 0;
  }
}

}  // namespace

bool structurally_equal(const Program& a, const Program& b) {
  if (a.dims.size() != b.dims.size()) return false;
  for (size_t i = 0; i < a.dims.size(); ++i)
    if (!expr_equal(*a.dims[i], *b.dims[i])) return false;
  return true;
}

int max_feature_index(const Program& prog) {
  int mx = -1;
  for (const auto& e : prog.dims) walk_max_feature(*e, &mx);
  return mx;
}

void validate_features(const Program& prog, int obs_dim) {
  int mx = max_feature_index(prog);
  if (mx >= obs_dim)
    throw ContractError("program reads feature " + std::to_string(mx) +
                        " but obs_dim is " + std::to_string(obs_dim));
}

int pid_slot_count(const Program& prog) {
  int n = 0;
  for (const auto& e : prog.dims) n += count_pids(*e);
  return n;
}

ProgState make_state(const Program& prog) {
  ProgState st;
  st.slots.resize(pid_slot_count(prog));
  return st;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double eval_tree(const TreeNode& n, const Vec& obs) {
  if (n.is_leaf) {
    if (n.affine_leaf) return n.leaf_weights.dot(obs.head(n.leaf_weights.size())) + n.leaf_bias;
    return n.value;
  }
  return obs[n.feature] < n.threshold ? eval_tree(*n.left, obs)
                                      : eval_tree(*n.right, obs);
}

// Shared by eval and linearize so accumulator dynamics cannot drift apart.
PidContext advance_pid(const Expr& e, PidSlot& slot, const Vec& obs, double dt) {
  PidContext ctx;
  ctx.error = e.setpoint - obs[e.feature];
  ctx.integral = slot.integral + ctx.error * dt;
  ctx.deriv = slot.fresh ? 0.0 : (ctx.error - slot.prev_error) / dt;
  slot.integral = ctx.integral;
  slot.prev_error = ctx.error;
  slot.fresh = false;
  return ctx;
}

double eval_expr(const Expr& e, const Vec& obs, double dt, ProgState& state,
                 int& slot) {
  switch (e.kind) {
    case NodeKind::kConst:
      return e.value;
    case NodeKind::kFeature:
      return obs[e.feature];
    case NodeKind::kAffine:
      return e.weights.dot(obs.head(e.weights.size())) + e.bias;
    case NodeKind::kPid: {
      PidContext ctx = advance_pid(e, state.slots[slot++], obs, dt);
      return e.kp * ctx.error + e.ki * ctx.integral + e.kd * ctx.deriv;
    }
    case NodeKind::kClip:
      return std::clamp(eval_expr(*e.child, obs, dt, state, slot), e.lo, e.hi);
    case NodeKind::kIf: {
      // Both branches run so every Pid slot advances once per step.
      double then_v = eval_expr(*e.then_branch, obs, dt, state, slot);
      double else_v = eval_expr(*e.else_branch, obs, dt, state, slot);
      return obs[e.feature] < e.threshold ? then_v : else_v;
    }
    case NodeKind::kTree:
      return eval_tree(*e.tree, obs);
  }
  return 0.0;
}

}  // namespace

Vec eval_step(const Program& prog, ProgState& state, const Vec& obs, double dt) {
  if (!(dt > 0)) throw ContractError("eval_step: dt must be > 0");
  if (!obs.allFinite()) throw ContractError("eval_step: non-finite observation");
  if ((int)state.slots.size() != pid_slot_count(prog))
    throw ContractError("eval_step: state has " +
                        std::to_string(state.slots.size()) + " pid slots, program needs " +
                        std::to_string(pid_slot_count(prog)));
  validate_features(prog, (int)obs.size());
  Vec out(prog.act_dim());
  int slot = 0;
  for (int d = 0; d < prog.act_dim(); ++d)
    out[d] = eval_expr(*prog.dims[d], obs, dt, state, slot);
  if (!out.allFinite()) throw ContractError("eval_step: non-finite program output");
  return out;
}

// ---------------------------------------------------------------------------
// Linearization

namespace {

int count_free(const Expr& e) {
  switch (e.kind) {
    case NodeKind::kConst:
      return 1;
    case NodeKind::kFeature:
      return 0;
    case NodeKind::kAffine:
      return (int)e.weights.size() + 1;
    case NodeKind::kPid:
      return 3;  // kp, ki, kd
    case NodeKind::kClip:
      throw ContractError("clip node: template is not linear in parameters");
    case NodeKind::kIf:
      return count_free(*e.then_branch) + count_free(*e.else_branch);
    case NodeKind::kTree:
      throw ContractError("tree node: not a pid-class template");
  }
  return 0;
}

void collect_params(const Expr& e, std::vector<double>* out) {
  switch (e.kind) {
    case NodeKind::kConst:
      out->push_back(e.value);
      break;
    case NodeKind::kFeature:
      break;
    case NodeKind::kAffine:
      for (int i = 0; i < e.weights.size(); ++i) out->push_back(e.weights[i]);
      out->push_back(e.bias);
      break;
    case NodeKind::kPid:
      out->push_back(e.kp);
      out->push_back(e.ki);
      out->push_back(e.kd);
      break;
    case NodeKind::kIf:
      collect_params(*e.then_branch, out);
      collect_params(*e.else_branch, out);
      break;
    default:
      throw ContractError("template contains a non-linear node");
  }
}

ExprPtr substitute_params(const Expr& e, const Eigen::VectorXd& params, int* cursor) {
  auto node = std::make_shared<Expr>(e);
  switch (e.kind) {
    case NodeKind::kConst:
      node->value = params[(*cursor)++];
      break;
    case NodeKind::kFeature:
      break;
    case NodeKind::kAffine:
      for (int i = 0; i < e.weights.size(); ++i)
        node->weights[i] = params[(*cursor)++];
      node->bias = params[(*cursor)++];
      break;
    case NodeKind::kPid:
      node->kp = params[(*cursor)++];
      node->ki = params[(*cursor)++];
      node->kd = params[(*cursor)++];
      break;
    case NodeKind::kIf:
      node->then_branch = substitute_params(*e.then_branch, params, cursor);
      node->else_branch = substitute_params(*e.else_branch, params, cursor);
      break;
    default:
      throw ContractError("template contains a non-linear node");
  }
  return node;
}

// mask is 1 when the node's value reaches the output, 0 on the untaken side
// of a guard. Pid accumulators advance regardless, mirroring eval_expr.
// CtxSrc yields the pid context per slot: live accumulators or a recorded
// list, so collection and refitting share one traversal.
template <typename CtxSrc>
void linearize_expr(const Expr& e, const Vec& obs, CtxSrc& ctx_src, int& slot,
                    double mask, int& param, double* fixed,
                    Eigen::VectorXd* coeffs,
                    std::vector<PidContext>* pid_context) {
  switch (e.kind) {
    case NodeKind::kConst:
      (*coeffs)[param++] += mask;
      break;
    case NodeKind::kFeature:
      *fixed += mask * obs[e.feature];
      break;
    case NodeKind::kAffine:
      for (int i = 0; i < e.weights.size(); ++i)
        (*coeffs)[param++] += mask * obs[i];
      (*coeffs)[param++] += mask;
      break;
    case NodeKind::kPid: {
      PidContext ctx = ctx_src(e, slot++, obs);
      pid_context->push_back(ctx);
      (*coeffs)[param++] += mask * ctx.error;
      (*coeffs)[param++] += mask * ctx.integral;
      (*coeffs)[param++] += mask * ctx.deriv;
      break;
    }
    case NodeKind::kIf: {
      double taken = obs[e.feature] < e.threshold ? 1.0 : 0.0;
      linearize_expr(*e.then_branch, obs, ctx_src, slot, mask * taken, param,
                     fixed, coeffs, pid_context);
      linearize_expr(*e.else_branch, obs, ctx_src, slot, mask * (1.0 - taken),
                     param, fixed, coeffs, pid_context);
      break;
    }
    default:
      throw ContractError("template contains a non-linear node");
  }
}

template <typename CtxSrc>
StepLinearization linearize_impl(const Program& prog, const Vec& obs,
                                 CtxSrc&& ctx_src) {
  StepLinearization lin;
  lin.fixed.resize(prog.act_dim(), 0.0);
  lin.coeffs.resize(prog.act_dim());
  int slot = 0;
  for (int d = 0; d < prog.act_dim(); ++d) {
    lin.coeffs[d] = Eigen::VectorXd::Zero(free_param_count(prog, d));
    int param = 0;
    linearize_expr(*prog.dims[d], obs, ctx_src, slot, 1.0, param,
                   &lin.fixed[d], &lin.coeffs[d], &lin.pid_context);
  }
  return lin;
}

}  // namespace

int free_param_count(const Program& prog, int dim) {
  return count_free(*prog.dims.at(dim));
}

Eigen::VectorXd free_params(const Program& prog, int dim) {
  std::vector<double> v;
  collect_params(*prog.dims.at(dim), &v);
  return Eigen::Map<Eigen::VectorXd>(v.data(), (long)v.size());
}

Program with_free_params(const Program& prog,
                         const std::vector<Eigen::VectorXd>& params_per_dim) {
  if ((int)params_per_dim.size() != prog.act_dim())
    throw ContractError("with_free_params: wrong number of dims");
  Program out;
  for (int d = 0; d < prog.act_dim(); ++d) {
    if (params_per_dim[d].size() != free_param_count(prog, d))
      throw ContractError("with_free_params: wrong parameter count for dim " +
                          std::to_string(d));
    int cursor = 0;
    out.dims.push_back(substitute_params(*prog.dims[d], params_per_dim[d], &cursor));
  }
  return out;
}

StepLinearization linearize_step(const Program& prog, ProgState& state,
                                 const Vec& obs, double dt) {
  if (!obs.allFinite()) throw ContractError("linearize_step: non-finite observation");
  if ((int)state.slots.size() != pid_slot_count(prog))
    throw ContractError("linearize_step: state does not match program");
  auto live = [&state, dt](const Expr& e, int slot, const Vec& o) {
    return advance_pid(e, state.slots[slot], o, dt);
  };
  return linearize_impl(prog, obs, live);
}

StepLinearization linearize_with_context(const Program& prog, const Vec& obs,
                                         const std::vector<PidContext>& context) {
  if ((int)context.size() != pid_slot_count(prog))
    throw ContractError("linearize_with_context: context does not match program");
  auto replay = [&context](const Expr&, int slot, const Vec&) {
    return context[(size_t)slot];
  };
  return linearize_impl(prog, obs, replay);
}

// ---------------------------------------------------------------------------
// CART

namespace {

struct CartBuilder {
  const Eigen::MatrixXd& X;
  Eigen::VectorXd y;  // one action dimension at a time
  const ClassConfig& cfg;

  TreeNodePtr build(std::vector<int> idx, int depth, double* sse_out) {
    double mean = 0.0;
    for (int i : idx) mean += y[i];
    mean /= (double)idx.size();
    double sse_leaf = 0.0;
    for (int i : idx) sse_leaf += (y[i] - mean) * (y[i] - mean);

    if (depth >= cfg.max_depth || (int)idx.size() < 2 * cfg.min_leaf ||
        sse_leaf <= 1e-12) {
      *sse_out = sse_leaf;
      return make_leaf(idx, mean);
    }

    int best_feature = -1;
    double best_threshold = 0.0, best_sse = sse_leaf - 1e-12;
    for (int j = 0; j < X.cols(); ++j) {
      if (!feature_allowed(j)) continue;
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return X(a, j) < X(b, j);
      });
      // prefix sums over the sorted order
      double sum_l = 0.0, sq_l = 0.0;
      double sum_all = 0.0, sq_all = 0.0;
      for (int i : idx) {
        sum_all += y[i];
        sq_all += y[i] * y[i];
      }
      const int n = (int)idx.size();
      for (int k = 0; k < n - 1; ++k) {
        double v = y[idx[k]];
        sum_l += v;
        sq_l += v * v;
        int nl = k + 1, nr = n - nl;
        if (X(idx[k], j) == X(idx[k + 1], j)) continue;  // no threshold here
        if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
        double sum_r = sum_all - sum_l, sq_r = sq_all - sq_l;
        double sse = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr);
        if (sse < best_sse) {
          best_sse = sse;
          best_feature = j;
          best_threshold = 0.5 * (X(idx[k], j) + X(idx[k + 1], j));
        }
      }
    }

    if (best_feature < 0) {
      *sse_out = sse_leaf;
      return make_leaf(idx, mean);
    }

    std::vector<int> left, right;
    for (int i : idx) {
      if (X(i, best_feature) < best_threshold)
        left.push_back(i);
      else
        right.push_back(i);
    }
    auto node = std::make_shared<TreeNode>();
    node->is_leaf = false;
    node->feature = best_feature;
    node->threshold = best_threshold;
    double sse_l = 0.0, sse_r = 0.0;
    node->left = build(std::move(left), depth + 1, &sse_l);
    node->right = build(std::move(right), depth + 1, &sse_r);
    *sse_out = sse_l + sse_r;
    return node;
  }

  bool feature_allowed(int j) const {
    if (cfg.feature_whitelist.empty()) return true;
    return std::find(cfg.feature_whitelist.begin(), cfg.feature_whitelist.end(),
                     j) != cfg.feature_whitelist.end();
  }

  TreeNodePtr make_leaf(const std::vector<int>& idx, double mean) const {
    auto leaf = std::make_shared<TreeNode>();
    leaf->is_leaf = true;
    if (cfg.affine_leaves && (int)idx.size() > (int)X.cols() + 1) {
      Eigen::MatrixXd A((int)idx.size(), X.cols() + 1);
      Eigen::VectorXd b((int)idx.size());
      for (size_t r = 0; r < idx.size(); ++r) {
        A.row((long)r).head(X.cols()) = X.row(idx[r]);
        A((long)r, X.cols()) = 1.0;
        b[(long)r] = y[idx[r]];
      }
      Eigen::VectorXd sol =
          A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
      leaf->affine_leaf = true;
      leaf->leaf_weights = sol.head(X.cols());
      leaf->leaf_bias = sol[X.cols()];
    } else {
      leaf->value = mean;
    }
    return leaf;
  }
};

}  // namespace

TreeFitResult fit_tree(const Eigen::MatrixXd& obs_rows,
                       const Eigen::MatrixXd& act_rows, const ClassConfig& cfg) {
  if (obs_rows.rows() == 0) throw ContractError("fit_tree: empty dataset");
  if (obs_rows.rows() != act_rows.rows())
    throw ContractError("fit_tree: obs/action row mismatch");
  if (cfg.kind != ClassKind::tree)
    throw ContractError("fit_tree: class config kind must be tree");
  if (cfg.max_depth < 0) throw ContractError("fit_tree: max_depth must be >= 0");

  TreeFitResult result;
  for (int d = 0; d < act_rows.cols(); ++d) {
    CartBuilder builder{obs_rows, act_rows.col(d), cfg};
    std::vector<int> idx((size_t)obs_rows.rows());
    std::iota(idx.begin(), idx.end(), 0);
    double sse = 0.0;
    auto root = builder.build(std::move(idx), 0, &sse);
    auto expr = std::make_shared<Expr>();
    expr->kind = NodeKind::kTree;
    expr->tree = root;
    result.program.dims.push_back(expr);
    result.sse += sse;
  }
  return result;
}

}  // namespace propel
