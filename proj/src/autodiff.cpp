#include "fscert/autodiff.hpp"

namespace fscert::ad {

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}

void Tape::backward(Var root) {
  if (root.tape != this || root.idx < 0 || root.idx >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Tape::backward: root does not belong to this tape");
  for (Node& n : nodes_) n.grad = 0.0;
  nodes_[root.idx].grad = 1.0;

  for (int i = root.idx; i >= 0; --i) {
    const Node& n = nodes_[i];
    const double g = n.grad;
    if (g == 0.0) continue;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        nodes_[n.a].grad += g;
        nodes_[n.b].grad += g;
        break;
      case Op::Sub:
        nodes_[n.a].grad += g;
        nodes_[n.b].grad -= g;
        break;
      case Op::Mul:
        nodes_[n.a].grad += g * nodes_[n.b].val;
        nodes_[n.b].grad += g * nodes_[n.a].val;
        break;
      case Op::Div: {
        const double bv = nodes_[n.b].val;
        nodes_[n.a].grad += g / bv;
        nodes_[n.b].grad -= g * n.val / bv;
        break;
      }
      case Op::Neg:
        nodes_[n.a].grad -= g;
        break;
      case Op::Tanh:
        nodes_[n.a].grad += g * (1.0 - n.val * n.val);
        break;
      case Op::Exp:
        nodes_[n.a].grad += g * n.val;
        break;
      case Op::Log:
        nodes_[n.a].grad += g / nodes_[n.a].val;
        break;
      case Op::Sqrt:
        nodes_[n.a].grad += g * 0.5 / n.val;
        break;
      case Op::Softplus: {
        const double x = nodes_[n.a].val;
        const double sig = x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        nodes_[n.a].grad += g * sig;
        break;
      }
      case Op::Gelu: {
        const double x = nodes_[n.a].val;
        const double cdf = 0.5 * std::erfc(-x * 0.70710678118654752440);
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        nodes_[n.a].grad += g * (cdf + x * pdf);
        break;
      }
      case Op::AddC:
        nodes_[n.a].grad += g;
        break;
      case Op::MulC:
        nodes_[n.a].grad += g * n.aux;
        break;
    }
  }
}

}  // namespace fscert::ad
