#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fscert::ad {

// Flat Wengert-list tape. Nodes are appended in evaluation order, so the
// reverse sweep is a single backwards pass over the array; no graph search.
// Tapes are cheap to clear and are meant to be rebuilt per training step.

enum class Op : unsigned char {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Tanh,
  Exp,
  Log,
  Sqrt,
  Softplus,
  Gelu,
  AddC,  // x + aux
  MulC,  // x * aux
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int idx = -1;
};

class Tape {
 public:
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  Var leaf(double v) { return push(Op::Leaf, v, -1, -1, 0.0); }

  double value(Var x) const { return nodes_[x.idx].val; }
  double grad(Var x) const { return nodes_[x.idx].grad; }

  Var add(Var a, Var b) { return push(Op::Add, nodes_[a.idx].val + nodes_[b.idx].val, a.idx, b.idx, 0.0); }
  Var sub(Var a, Var b) { return push(Op::Sub, nodes_[a.idx].val - nodes_[b.idx].val, a.idx, b.idx, 0.0); }
  Var mul(Var a, Var b) { return push(Op::Mul, nodes_[a.idx].val * nodes_[b.idx].val, a.idx, b.idx, 0.0); }
  Var div(Var a, Var b) { return push(Op::Div, nodes_[a.idx].val / nodes_[b.idx].val, a.idx, b.idx, 0.0); }
  Var neg(Var a) { return push(Op::Neg, -nodes_[a.idx].val, a.idx, -1, 0.0); }
  Var add_c(Var a, double c) { return push(Op::AddC, nodes_[a.idx].val + c, a.idx, -1, c); }
  Var mul_c(Var a, double c) { return push(Op::MulC, nodes_[a.idx].val * c, a.idx, -1, c); }
  Var tanh(Var a) { return push(Op::Tanh, std::tanh(nodes_[a.idx].val), a.idx, -1, 0.0); }
  Var exp(Var a) { return push(Op::Exp, std::exp(nodes_[a.idx].val), a.idx, -1, 0.0); }
  Var log(Var a) { return push(Op::Log, std::log(nodes_[a.idx].val), a.idx, -1, 0.0); }
  Var sqrt(Var a) { return push(Op::Sqrt, std::sqrt(nodes_[a.idx].val), a.idx, -1, 0.0); }

  Var softplus(Var a) {
    const double x = nodes_[a.idx].val;
    // log1p(exp(x)) with the large-x branch folded in for stability
    const double v = x > 30.0 ? x : std::log1p(std::exp(x));
    return push(Op::Softplus, v, a.idx, -1, 0.0);
  }

  Var gelu(Var a) {
    const double x = nodes_[a.idx].val;
    const double v = 0.5 * x * std::erfc(-x * 0.70710678118654752440);
    return push(Op::Gelu, v, a.idx, -1, 0.0);
  }

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every node.
  void backward(Var root);

 private:
  struct Node {
    Op op;
    int a, b;
    double val;
    double grad;
    double aux;
  };

  Var push(Op op, double val, int a, int b, double aux) {
    nodes_.push_back(Node{op, a, b, val, 0.0, aux});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

// Operator sugar so numeric code reads the same for double and Var.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }
inline Var operator+(Var a, double c) { return a.tape->add_c(a, c); }
inline Var operator+(double c, Var a) { return a.tape->add_c(a, c); }
inline Var operator-(Var a, double c) { return a.tape->add_c(a, -c); }
inline Var operator-(double c, Var a) { return a.tape->add_c(a.tape->neg(a), c); }
inline Var operator*(Var a, double c) { return a.tape->mul_c(a, c); }
inline Var operator*(double c, Var a) { return a.tape->mul_c(a, c); }
inline Var operator/(Var a, double c) { return a.tape->mul_c(a, 1.0 / c); }

// Scalar abstraction: numeric kernels are templated on S in {double, Var} so
// the plain and differentiated paths share one definition.
template <class S>
struct Scalar;

template <>
struct Scalar<double> {
  static double constant(Tape*, double c) { return c; }
  static double value(double x) { return x; }
  static double tanh(double x) { return std::tanh(x); }
  static double exp(double x) { return std::exp(x); }
  static double log(double x) { return std::log(x); }
  static double sqrt(double x) { return std::sqrt(x); }
  static double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
  static double gelu(double x) { return 0.5 * x * std::erfc(-x * 0.70710678118654752440); }
};

template <>
struct Scalar<Var> {
  static Var constant(Tape* t, double c) {
    if (t == nullptr) throw std::logic_error("Scalar<Var>::constant: null tape");
    return t->leaf(c);
  }
  static double value(Var x) { return x.tape->value(x); }
  static Var tanh(Var x) { return x.tape->tanh(x); }
  static Var exp(Var x) { return x.tape->exp(x); }
  static Var log(Var x) { return x.tape->log(x); }
  static Var sqrt(Var x) { return x.tape->sqrt(x); }
  static Var softplus(Var x) { return x.tape->softplus(x); }
  static Var gelu(Var x) { return x.tape->gelu(x); }
};

}  // namespace fscert::ad
