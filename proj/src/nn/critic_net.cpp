#include "demi/nn/critic_net.hpp"

#include <cmath>

#include "demi/errors.hpp"

namespace demi::nn {

CriticNet::CriticNet(std::size_t input_dim, std::size_t hidden, std::size_t output)
    : w1({hidden, input_dim}), b1({hidden}), w2({output, hidden}), b2({output}) {
  if (input_dim == 0 || hidden == 0 || output == 0) throw ShapeError("CriticNet: zero width");
}

CriticNet CriticNet::random(std::size_t input_dim, Rng& rng, std::size_t hidden,
                            std::size_t output) {
  CriticNet net(input_dim, hidden, output);
  const auto fill = [&rng](Tensor& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.data()) v = u(rng);
  };
  fill(net.w1, input_dim);
  fill(net.b1, input_dim);
  fill(net.w2, hidden);
  fill(net.b2, hidden);
  return net;
}

std::vector<Tensor*> CriticNet::parameters() { return {&w1, &b1, &w2, &b2}; }

std::vector<const Tensor*> CriticNet::parameters() const { return {&w1, &b1, &w2, &b2}; }

const std::vector<std::string>& CriticNet::parameter_names() {
  static const std::vector<std::string> names{"w1", "b1", "w2", "b2"};
  return names;
}

bool CriticNet::all_finite() const {
  return w1.all_finite() && b1.all_finite() && w2.all_finite() && b2.all_finite();
}

RowVector pad_single(const RowRef& v) {
  RowVector out = RowVector::Zero(2 * v.size());
  out.head(v.size()) = v;
  return out;
}

Matrix pad_rows(const Matrix& m) {
  Matrix out = Matrix::Zero(m.rows(), 2 * m.cols());
  out.leftCols(m.cols()) = m;
  return out;
}

Matrix encode_rows(const CriticNet& net, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != net.input_dim())
    throw ShapeError("encode: input width does not match the network");
  Matrix h(inputs.rows(), static_cast<Eigen::Index>(net.hidden_dim()));
  h.noalias() = inputs * net.w1.matrix().transpose();
  h.rowwise() += net.b1.matrix().row(0);
  h = h.cwiseMax(0.0);
  Matrix out(inputs.rows(), static_cast<Eigen::Index>(net.output_dim()));
  out.noalias() = h * net.w2.matrix().transpose();
  out.rowwise() += net.b2.matrix().row(0);
  return out;
}

RowVector encode(const CriticNet& net, const RowRef& input) {
  Matrix m = input;
  return encode_rows(net, m).row(0);
}

double critic_value(const CriticNet& net, const RowRef& a, const RowRef& b) {
  return encode(net, a).dot(encode(net, b));
}

NetVars bind(Graph& g, const CriticNet& net, bool trainable) {
  if (trainable)
    return {g.parameter(net.w1), g.parameter(net.b1), g.parameter(net.w2), g.parameter(net.b2)};
  return {g.constant(Matrix(net.w1.matrix())), g.constant(Matrix(net.b1.matrix())),
          g.constant(Matrix(net.w2.matrix())), g.constant(Matrix(net.b2.matrix()))};
}

Var encode(Graph& g, const NetVars& vars, Var inputs) {
  Var h = g.relu(g.affine(inputs, vars.w1, vars.b1));
  return g.affine(h, vars.w2, vars.b2);
}

std::vector<Tensor> gradients(const Graph& g, const NetVars& vars, const CriticNet& net) {
  std::vector<Tensor> out;
  const auto params = net.parameters();
  const auto handles = vars.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix gm = g.grad(handles[i]);
    out.emplace_back(params[i]->shape(), std::vector<double>(gm.data(), gm.data() + gm.size()));
  }
  return out;
}

}  // namespace demi::nn
