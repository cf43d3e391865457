#include "cycleground/numcore/graph.hpp"

#include <algorithm>
#include <cmath>

#include "cycleground/errors.hpp"

namespace cycleground::numcore {

namespace {

Graph& same_graph(Var a, Var b, const char* what) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw UsageError(std::string(what) + ": operands belong to different graphs");
  }
  return a.graph();
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape().str() +
                         " vs " + b.shape().str());
  }
}

Node make_node(Op op, Matrix value, std::vector<std::uint32_t> parents) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents = std::move(parents);
  return n;
}

Var unary(Op op, Var a, Matrix value) {
  return a.graph().push(make_node(op, std::move(value), {a.id()}));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRow: return "add_row";
    case Op::Scale: return "scale";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Log: return "log";
    case Op::Concat: return "concat";
    case Op::SliceCols: return "slice_cols";
    case Op::Softmax: return "softmax";
    case Op::CrossEntropy: return "cross_entropy";
    case Op::Sum: return "sum";
    case Op::GatherRows: return "gather_rows";
    case Op::RepeatRows: return "repeat_rows";
    case Op::Reshape: return "reshape";
    case Op::RegionDot: return "region_dot";
    case Op::RegionPool: return "region_pool";
    case Op::KlDivergence: return "kl_divergence";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Var

const Matrix& Var::value() const { return graph_->node(id_).value; }
const Matrix& Var::grad() const { return graph_->node(id_).grad; }
Shape Var::shape() const { return Shape::of(value()); }
bool Var::requires_grad() const { return graph_->node(id_).requires_grad; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("scalar(): node has shape " + shape().str());
  }
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Graph

Graph::Graph(GraphOptions options) : options_(options) { nodes_.reserve(1024); }

Var Graph::push(Node node) {
  if (node.op != Op::Leaf) {
    node.requires_grad = std::any_of(node.parents.begin(), node.parents.end(),
                                     [&](std::uint32_t p) { return nodes_[p].requires_grad; });
  }
  node.stage = stage_;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Matrix value) {
  Shape::of(value);
  Node n = make_node(Op::Leaf, std::move(value), {});
  n.requires_grad = false;
  return push(std::move(n));
}

Var Graph::variable(Matrix value) {
  Shape::of(value);
  Node n = make_node(Op::Leaf, std::move(value), {});
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::param(std::string_view name, const Matrix& value) {
  if (auto existing = find_param(name)) {
    return *existing;
  }
  Var v = variable(value);
  params_.emplace_back(std::string(name), v.id());
  return v;
}

std::optional<Var> Graph::find_param(std::string_view name) const {
  for (const auto& [n, id] : params_) {
    if (n == name) return Var(const_cast<Graph*>(this), id);
  }
  return std::nullopt;
}

void Graph::backward(Var root) {
  if (&root.graph() != this) {
    throw UsageError("backward: root belongs to another graph");
  }
  if (root.value().rows() != 1 || root.value().cols() != 1) {
    throw UsageError("backward: root must be a scalar, got " + root.shape().str());
  }
  for (auto& n : nodes_) {
    if (n.requires_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!nodes_[root.id()].requires_grad) {
    return;
  }
  nodes_[root.id()].grad(0, 0) = 1.0;
  for (std::uint32_t id = root.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (n.requires_grad && n.op != Op::Leaf) {
      propagate(id);
    }
  }
}

void Graph::propagate(std::uint32_t id) {
  // Parent references stay valid: no nodes are appended during backward.
  Node& n = nodes_[id];
  const Matrix& g = n.grad;
  auto parent = [&](std::size_t k) -> Node& { return nodes_[n.parents[k]]; };
  auto wants = [&](std::size_t k) { return parent(k).requires_grad; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      if (wants(0)) parent(0).grad.noalias() += g * parent(1).value.transpose();
      if (wants(1)) parent(1).grad.noalias() += parent(0).value.transpose() * g;
      break;
    }
    case Op::Add:
      if (wants(0)) parent(0).grad += g;
      if (wants(1)) parent(1).grad += g;
      break;
    case Op::Sub:
      if (wants(0)) parent(0).grad += g;
      if (wants(1)) parent(1).grad -= g;
      break;
    case Op::Mul:
      if (wants(0)) parent(0).grad.array() += g.array() * parent(1).value.array();
      if (wants(1)) parent(1).grad.array() += g.array() * parent(0).value.array();
      break;
    case Op::AddRow:
      if (wants(0)) parent(0).grad += g;
      if (wants(1)) parent(1).grad += g.colwise().sum();
      break;
    case Op::Scale:
      if (wants(0)) parent(0).grad += n.factor * g;
      break;
    case Op::Tanh:
      if (wants(0)) {
        if (options_.corrupt_tanh_grad) {
          parent(0).grad.array() += g.array() * (1.0 - n.value.array());
        } else {
          parent(0).grad.array() += g.array() * (1.0 - n.value.array().square());
        }
      }
      break;
    case Op::Sigmoid:
      if (wants(0)) parent(0).grad.array() += g.array() * n.value.array() * (1.0 - n.value.array());
      break;
    case Op::Relu:
      if (wants(0)) {
        parent(0).grad.array() += (parent(0).value.array() > 0.0).select(g.array(), 0.0);
      }
      break;
    case Op::Log:
      if (wants(0)) parent(0).grad.array() += g.array() / parent(0).value.array();
      break;
    case Op::Concat: {
      Index offset = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        Node& p = parent(k);
        const Index w = p.value.cols();
        if (p.requires_grad) p.grad += g.middleCols(offset, w);
        offset += w;
      }
      break;
    }
    case Op::SliceCols:
      if (wants(0)) parent(0).grad.middleCols(n.arg0, n.arg1) += g;
      break;
    case Op::Softmax: {
      if (wants(0)) {
        const Matrix& y = n.value;
        const Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
        Matrix dz = y.array() * (g.colwise() - dots).array();
        parent(0).grad += dz;
      }
      break;
    }
    case Op::CrossEntropy: {
      if (wants(0)) {
        const double upstream = g(0, 0);
        Matrix& dz = parent(0).grad;
        for (Index i = 0; i < n.aux.rows(); ++i) {
          const double w = n.weights[static_cast<std::size_t>(i)];
          if (w == 0.0) continue;
          dz.row(i) += (upstream * w) * n.aux.row(i);
          dz(i, n.indices[static_cast<std::size_t>(i)]) -= upstream * w;
        }
      }
      break;
    }
    case Op::KlDivergence:
      if (wants(0)) {
        const double upstream = g(0, 0);
        Matrix& dz = parent(0).grad;
        for (Index i = 0; i < n.aux.rows(); ++i) {
          dz.row(i) += (upstream * n.weights[static_cast<std::size_t>(i)]) * n.aux.row(i);
        }
      }
      break;
    case Op::Sum:
      if (wants(0)) parent(0).grad.array() += g(0, 0);
      break;
    case Op::GatherRows:
      if (wants(0)) {
        Matrix& dt = parent(0).grad;
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          dt.row(n.indices[i]) += g.row(static_cast<Index>(i));
        }
      }
      break;
    case Op::RepeatRows:
      if (wants(0)) {
        const Index times = n.arg0;
        Matrix& da = parent(0).grad;
        for (Index b = 0; b < da.rows(); ++b) {
          da.row(b) += g.middleRows(b * times, times).colwise().sum();
        }
      }
      break;
    case Op::Reshape:
      if (wants(0)) {
        Matrix& da = parent(0).grad;
        Eigen::Map<const Eigen::VectorXd> src(g.data(), g.size());
        Eigen::Map<Eigen::VectorXd>(da.data(), da.size()) += src;
      }
      break;
    case Op::RegionDot: {
      const Matrix& q = parent(0).value;
      const Matrix& r = parent(1).value;
      const Index count = g.cols();
      for (Index b = 0; b < q.rows(); ++b) {
        const auto block = r.middleRows(b * count, count);
        if (wants(0)) parent(0).grad.row(b).noalias() += g.row(b) * block;
        if (wants(1)) parent(1).grad.middleRows(b * count, count).noalias() += g.row(b).transpose() * q.row(b);
      }
      break;
    }
    case Op::RegionPool: {
      const Matrix& w = parent(0).value;
      const Matrix& r = parent(1).value;
      const Index count = w.cols();
      for (Index b = 0; b < w.rows(); ++b) {
        const auto block = r.middleRows(b * count, count);
        if (wants(0)) parent(0).grad.row(b).noalias() += g.row(b) * block.transpose();
        if (wants(1)) parent(1).grad.middleRows(b * count, count).noalias() += w.row(b).transpose() * g.row(b);
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  if (a.value().cols() != b.value().rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape().str() + " x " +
                         b.shape().str());
  }
  Matrix out;
  out.noalias() = a.value() * b.value();
  return g.push(make_node(Op::MatMul, std::move(out), {a.id(), b.id()}));
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b, "add");
  require_same_shape(a, b, "add");
  return g.push(make_node(Op::Add, a.value() + b.value(), {a.id(), b.id()}));
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b, "sub");
  require_same_shape(a, b, "sub");
  return g.push(make_node(Op::Sub, a.value() - b.value(), {a.id(), b.id()}));
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b, "mul");
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return g.push(make_node(Op::Mul, std::move(out), {a.id(), b.id()}));
}

Var add_row(Var a, Var row) {
  Graph& g = same_graph(a, row, "add_row");
  if (row.value().rows() != 1 || row.value().cols() != a.value().cols()) {
    throw DimensionError("add_row: cannot broadcast " + row.shape().str() + " over " +
                         a.shape().str());
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return g.push(make_node(Op::AddRow, std::move(out), {a.id(), row.id()}));
}

Var scale(Var a, double factor) {
  Node n = make_node(Op::Scale, factor * a.value(), {a.id()});
  n.factor = factor;
  return a.graph().push(std::move(n));
}

Var tanh(Var a) { return unary(Op::Tanh, a, a.value().array().tanh().matrix()); }

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    // Branching keeps exp() from overflowing for large |x|.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return unary(Op::Sigmoid, a, std::move(out));
}

Var relu(Var a) { return unary(Op::Relu, a, a.value().cwiseMax(0.0)); }

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) {
    throw NumericError("log: non-positive input");
  }
  return unary(Op::Log, a, a.value().array().log().matrix());
}

Var elementwise(Elementwise kind, std::span<const Var> operands, double factor) {
  const bool binary = kind == Elementwise::Add || kind == Elementwise::Mul;
  const std::size_t expected = binary ? 2 : 1;
  if (operands.size() != expected) {
    throw UsageError("elementwise: expected " + std::to_string(expected) + " operand(s), got " +
                     std::to_string(operands.size()));
  }
  switch (kind) {
    case Elementwise::Add: return add(operands[0], operands[1]);
    case Elementwise::Mul: return mul(operands[0], operands[1]);
    case Elementwise::Tanh: return tanh(operands[0]);
    case Elementwise::Sigmoid: return sigmoid(operands[0]);
    case Elementwise::Relu: return relu(operands[0]);
    case Elementwise::Scale: return scale(operands[0], factor);
  }
  throw UsageError("elementwise: unknown kind");
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) {
    throw UsageError("concat: at least one part is required");
  }
  Graph& g = parts[0].graph();
  const Index rows = parts[0].value().rows();
  Index cols = 0;
  std::vector<std::uint32_t> parents;
  parents.reserve(parts.size());
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw UsageError("concat: parts belong to different graphs");
    if (p.value().rows() != rows) {
      throw DimensionError("concat: row mismatch " + parts[0].shape().str() + " vs " +
                           p.shape().str());
    }
    cols += p.value().cols();
    parents.push_back(p.id());
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.value().cols()) = p.value();
    offset += p.value().cols();
  }
  return g.push(make_node(Op::Concat, std::move(out), std::move(parents)));
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_cols(Var a, Index start, Index length) {
  if (start < 0 || length < 1 || start + length > a.value().cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") out of range for " + a.shape().str());
  }
  Node n = make_node(Op::SliceCols, a.value().middleCols(start, length), {a.id()});
  n.arg0 = start;
  n.arg1 = length;
  return a.graph().push(std::move(n));
}

namespace {

Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    out.row(i) = (z.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace

Var softmax(Var z) {
  if (!all_finite(z.value())) {
    throw NumericError("softmax: non-finite input");
  }
  return unary(Op::Softmax, z, softmax_rows(z.value()));
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> row_weights) {
  const Matrix& z = logits.value();
  if (static_cast<Index>(targets.size()) != z.rows() ||
      static_cast<Index>(row_weights.size()) != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                         std::to_string(row_weights.size()) + " weights for logits " +
                         logits.shape().str());
  }
  if (!all_finite(z)) {
    throw NumericError("cross_entropy: non-finite logits");
  }
  Node n;
  n.op = Op::CrossEntropy;
  n.parents = {logits.id()};
  n.aux = softmax_rows(z);
  n.indices.assign(targets.begin(), targets.end());
  n.weights.assign(row_weights.begin(), row_weights.end());
  double total = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= z.cols()) {
      throw UsageError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(z.cols()) + ")");
    }
    const double w = row_weights[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    total += w * (lse - z(i, t));
  }
  n.value = Matrix::Constant(1, 1, total);
  return logits.graph().push(std::move(n));
}

Var cross_entropy(Var logits, int target) {
  const std::vector<int> targets(static_cast<std::size_t>(logits.value().rows()), target);
  const std::vector<double> weights(targets.size(), 1.0);
  return cross_entropy(logits, targets, weights);
}

Var kl_divergence(const Matrix& target, Var logits, std::span<const double> row_weights) {
  const Matrix& z = logits.value();
  if (target.rows() != z.rows() || target.cols() != z.cols() ||
      static_cast<Index>(row_weights.size()) != z.rows()) {
    throw DimensionError("kl_divergence: target " + Shape::of(target).str() + " / " +
                         std::to_string(row_weights.size()) + " weights for logits " +
                         logits.shape().str());
  }
  if (!all_finite(z) || !all_finite(target)) {
    throw NumericError("kl_divergence: non-finite input");
  }
  for (Index i = 0; i < target.rows(); ++i) {
    if (target.row(i).minCoeff() < 0.0 || std::abs(target.row(i).sum() - 1.0) > 1e-9) {
      throw UsageError("kl_divergence: target row " + std::to_string(i) + " is not a distribution");
    }
  }
  const Matrix q = softmax_rows(z);
  double total = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const double w = row_weights[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    double kl = 0.0;
    for (Index k = 0; k < z.cols(); ++k) {
      const double p = target(i, k);
      if (p > 0.0) kl += p * (std::log(p) - (z(i, k) - lse));
    }
    total += w * kl;
  }
  Node n;
  n.op = Op::KlDivergence;
  n.parents = {logits.id()};
  n.aux = q - target;
  n.weights.assign(row_weights.begin(), row_weights.end());
  n.value = Matrix::Constant(1, 1, total);
  return logits.graph().push(std::move(n));
}

Var sum(Var a) { return unary(Op::Sum, a, Matrix::Constant(1, 1, a.value().sum())); }

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& t = table.value();
  if (ids.empty()) throw UsageError("gather_rows: no ids");
  Matrix out(static_cast<Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw UsageError("gather_rows: id " + std::to_string(ids[i]) + " outside table " +
                       table.shape().str());
    }
    out.row(static_cast<Index>(i)) = t.row(ids[i]);
  }
  Node n = make_node(Op::GatherRows, std::move(out), {table.id()});
  n.indices.assign(ids.begin(), ids.end());
  return table.graph().push(std::move(n));
}

Var repeat_rows(Var a, Index times) {
  if (times < 1) throw UsageError("repeat_rows: times must be >= 1");
  const Matrix& v = a.value();
  Matrix out(v.rows() * times, v.cols());
  for (Index b = 0; b < v.rows(); ++b) {
    out.middleRows(b * times, times).rowwise() = v.row(b);
  }
  Node n = make_node(Op::RepeatRows, std::move(out), {a.id()});
  n.arg0 = times;
  return a.graph().push(std::move(n));
}

Var reshape(Var a, Index rows, Index cols) {
  Shape::of(rows, cols);
  if (rows * cols != a.value().size()) {
    throw DimensionError("reshape: cannot view " + a.shape().str() + " as [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return unary(Op::Reshape, a, std::move(out));
}

Var region_dot(Var queries, Var regions) {
  Graph& g = same_graph(queries, regions, "region_dot");
  const Matrix& q = queries.value();
  const Matrix& r = regions.value();
  if (q.cols() != r.cols() || r.rows() % q.rows() != 0) {
    throw DimensionError("region_dot: queries " + queries.shape().str() + " vs regions " +
                         regions.shape().str());
  }
  const Index count = r.rows() / q.rows();
  Matrix out(q.rows(), count);
  for (Index b = 0; b < q.rows(); ++b) {
    out.row(b).noalias() = q.row(b) * r.middleRows(b * count, count).transpose();
  }
  return g.push(make_node(Op::RegionDot, std::move(out), {queries.id(), regions.id()}));
}

Var region_pool(Var weights, Var regions) {
  Graph& g = same_graph(weights, regions, "region_pool");
  const Matrix& w = weights.value();
  const Matrix& r = regions.value();
  if (r.rows() != w.rows() * w.cols()) {
    throw DimensionError("region_pool: weights " + weights.shape().str() + " vs regions " +
                         regions.shape().str());
  }
  const Index count = w.cols();
  Matrix out(w.rows(), r.cols());
  for (Index b = 0; b < w.rows(); ++b) {
    out.row(b).noalias() = w.row(b) * r.middleRows(b * count, count);
  }
  return g.push(make_node(Op::RegionPool, std::move(out), {weights.id(), regions.id()}));
}

LstmState lstm_cell(Var x, Var h_prev, Var c_prev, const LstmWeights& weights) {
  const Index hidden = h_prev.value().cols();
  const Index in = x.value().cols();
  if (weights.w.value().rows() != in + hidden || weights.w.value().cols() != 4 * hidden) {
    throw DimensionError("lstm_cell: weights " + weights.w.shape().str() + " do not fit input " +
                         x.shape().str() + " and hidden " + h_prev.shape().str());
  }
  if (c_prev.shape() != h_prev.shape() || x.value().rows() != h_prev.value().rows()) {
    throw DimensionError("lstm_cell: state shapes " + h_prev.shape().str() + "/" +
                         c_prev.shape().str() + " vs input " + x.shape().str());
  }
  Var gates = add_row(matmul(concat({x, h_prev}), weights.w), weights.b);
  Var i = sigmoid(slice_cols(gates, 0, hidden));
  Var f = sigmoid(slice_cols(gates, hidden, hidden));
  Var o = sigmoid(slice_cols(gates, 2 * hidden, hidden));
  Var g = tanh(slice_cols(gates, 3 * hidden, hidden));
  Var c = add(mul(f, c_prev), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace cycleground::numcore
