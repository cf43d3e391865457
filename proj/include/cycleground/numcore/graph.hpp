#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cycleground/numcore/tensor.hpp"

namespace cycleground::numcore {

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  AddRow,
  Scale,
  Tanh,
  Sigmoid,
  Relu,
  Log,
  Concat,
  SliceCols,
  Softmax,
  CrossEntropy,
  Sum,
  GatherRows,
  RepeatRows,
  Reshape,
  RegionDot,
  RegionPool,
  KlDivergence,
};

const char* op_name(Op op);

/// Which part of a forward pass created a node. Purely informational for the
/// autodiff itself; graph tests use it to reason about gradient routing.
enum class Stage : std::uint8_t { None, Encode, Decode, Localize, Reconstruct, Loss };

struct GraphOptions {
  /// Test hook: registers tanh' = 1 - y instead of 1 - y^2 so gradient
  /// checks can prove they catch a broken derivative.
  bool corrupt_tanh_grad = false;
};

struct Node {
  Matrix value;
  Matrix grad;
  Op op = Op::Leaf;
  std::vector<std::uint32_t> parents;
  bool requires_grad = false;
  Stage stage = Stage::None;

  // Op-specific payload.
  std::vector<int> indices;
  std::vector<double> weights;
  Matrix aux;
  double factor = 0.0;
  Index arg0 = 0;
  Index arg1 = 0;
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy. References returned by
/// value()/grad() are invalidated by the next node insertion.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }

  const Matrix& value() const;
  const Matrix& grad() const;
  Shape shape() const;
  bool requires_grad() const;
  double scalar() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// A single-threaded tape. Nodes are appended in creation order, which is a
/// topological order, so backward() simply walks the tape in reverse.
class Graph {
 public:
  explicit Graph(GraphOptions options = {});
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Leaf bound to a named parameter. Binding the same name twice returns the
  /// original leaf, so every consumer shares one node and one gradient slot.
  Var param(std::string_view name, const Matrix& value);
  std::optional<Var> find_param(std::string_view name) const;
  const std::vector<std::pair<std::string, std::uint32_t>>& params() const { return params_; }

  void set_stage(Stage stage) { stage_ = stage; }
  Stage stage() const { return stage_; }

  /// Fills grad for every node that requires it with d(root)/d(node).
  /// Previous gradients are discarded. root must be 1x1.
  void backward(Var root);

  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  const GraphOptions& options() const { return options_; }

  /// Appends a fully built node; requires_grad is derived from the parents.
  Var push(Node node);
  Var var(std::uint32_t id) { return Var(this, id); }

 private:
  void propagate(std::uint32_t id);

  GraphOptions options_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::uint32_t>> params_;
  Stage stage_ = Stage::None;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a [m x n] + row [1 x n] broadcast over rows.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var log(Var a);

enum class Elementwise : std::uint8_t { Add, Mul, Tanh, Sigmoid, Relu, Scale };

/// Dispatching front end over the elementwise kernels. Binary kinds take two
/// operands of equal shape, unary kinds take one; Scale uses `factor`.
Var elementwise(Elementwise kind, std::span<const Var> operands, double factor = 1.0);

/// Column-wise concatenation; all parts must have the same row count.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice_cols(Var a, Index start, Index length);

/// Row-wise softmax with max subtraction. Non-finite input is a NumericError.
Var softmax(Var z);

/// sum_i w_i * (-log softmax(logits_i)[targets_i]). Rows with zero weight
/// contribute nothing. Returns a 1x1 node.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> row_weights);
Var cross_entropy(Var logits, int target);

/// sum_i w_i * KL(target_i || softmax(logits_i)). `target` is a constant
/// whose rows are distributions; 0 log 0 counts as 0. Returns a 1x1 node.
Var kl_divergence(const Matrix& target, Var logits, std::span<const double> row_weights);

Var sum(Var a);

/// out[i] = table[ids[i]]; the embedding lookup W_e * onehot(id).
Var gather_rows(Var table, std::span<const int> ids);

/// [B x d] -> [(B*times) x d], row b repeated `times` times consecutively.
Var repeat_rows(Var a, Index times);
Var reshape(Var a, Index rows, Index cols);

/// Batched region scoring. queries [B x d], regions [(B*N) x d] where rows
/// b*N..b*N+N-1 belong to example b. out[b, n] = queries[b] . regions[b*N+n].
Var region_dot(Var queries, Var regions);

/// Batched pooling. weights [B x N], regions [(B*N) x d].
/// out[b] = sum_n weights[b, n] * regions[b*N+n].
Var region_pool(Var weights, Var regions);

struct LstmWeights {
  Var w;  ///< [(in + H) x 4H], gate blocks ordered i, f, o, g
  Var b;  ///< [1 x 4H]
};

struct LstmState {
  Var h;
  Var c;
};

/// c = f*c_prev + i*g, h = o*tanh(c) with sigmoid i/f/o and tanh g.
LstmState lstm_cell(Var x, Var h_prev, Var c_prev, const LstmWeights& weights);

}  // namespace cycleground::numcore
