#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace comatch {

// Shape/domain violations. ShapeError: operand extents disagree.
// ValueError: everything else a caller got wrong (labels, empty inputs,
// ids out of range, malformed configs).
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. `graph_id`/`node` tie a tensor to the
// differentiation graph that produced it; both stay unset for constants.
// The payload is shared (ops never mutate their inputs), so copies are cheap.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  std::uint64_t graph_id = 0;
  std::int32_t node = -1;

  Tensor() : data(std::make_shared<std::vector<double>>()) {}

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape s, std::vector<double> values);
  // Test/CLI convenience: 2-D literal.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t size() const { return data->size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double at(std::size_t i) const { return (*data)[i]; }
  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i, std::size_t j) const { return (*data)[i * cols() + j]; }
  double& at(std::size_t i, std::size_t j) { return (*data)[i * cols() + j]; }

  double item() const;
  bool has_node() const { return node >= 0; }
  bool all_finite() const;

  const std::vector<double>& values() const { return *data; }
  std::vector<double>& values() { return *data; }

  // Fresh storage, detached from any graph.
  Tensor detached_copy() const;
};

enum class Unary { Tanh, Sigmoid, Arctan, Relu, Abs };

// Reverse-mode tape. Operations record themselves in topological order;
// backward() sweeps the tape once, accumulating gradients additively into
// per-node slots. One graph per forward/backward pass; single-threaded
// within a graph; independent graphs are independent.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf with a gradient slot. Shares the input's storage.
  Tensor input(const Tensor& t);

  Tensor matmul(const Tensor& x, const Tensor& y);
  Tensor transpose(const Tensor& x);
  Tensor add(const Tensor& x, const Tensor& y);
  Tensor sub(const Tensor& x, const Tensor& y);
  Tensor mul(const Tensor& x, const Tensor& y);
  Tensor scale(const Tensor& x, double c);
  // x [m x n] plus row vector b [n], broadcast over rows. The one sanctioned
  // broadcast besides scale(); everything else must match shapes exactly.
  Tensor add_rowvec(const Tensor& x, const Tensor& b);
  // x minus a scalar tensor, broadcast everywhere.
  Tensor sub_scalar(const Tensor& x, const Tensor& s);

  Tensor unary(Unary op, const Tensor& x);
  Tensor tanh(const Tensor& x) { return unary(Unary::Tanh, x); }
  Tensor sigmoid(const Tensor& x) { return unary(Unary::Sigmoid, x); }
  Tensor arctan(const Tensor& x) { return unary(Unary::Arctan, x); }
  Tensor relu(const Tensor& x) { return unary(Unary::Relu, x); }
  Tensor abs(const Tensor& x) { return unary(Unary::Abs, x); }

  // out[i][j] = sum_k |x[i][k] - y[j][k]|. Subgradient uses sign(0) := 0.
  Tensor pairwise_l1(const Tensor& x, const Tensor& y);
  Tensor mean_all(const Tensor& x);
  Tensor softmax_rows(const Tensor& x);
  // Normalization over the last axis, per row, with learnable gain/bias [n].
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  // logits: [C] or [1 x C]; raw (unnormalized) scores.
  Tensor cross_entropy(const Tensor& logits, std::size_t label);
  // Row gather from table [V x d]; gradient scatters back into the table.
  Tensor embed_rows(const Tensor& table, const std::vector<std::size_t>& ids);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);

  // root must be scalar. Zeroes all slots, then one reverse sweep.
  void backward(const Tensor& root);
  // Gradient of the last backward() w.r.t. t (zeros if untouched).
  Tensor gradient(const Tensor& t) const;

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> grad;
    std::function<void(Graph&)> back;  // empty for leaves
  };

  std::int32_t fresh_node(const Shape& shape);
  Tensor make_result(Shape shape, std::vector<double> values,
                     std::function<void(Graph&)> back);
  // -1 when the operand is a constant or belongs to no graph.
  std::int32_t parent_of(const Tensor& t) const;
  std::vector<double>& slot(std::int32_t node) { return nodes_[static_cast<std::size_t>(node)].grad; }

  std::vector<Node> nodes_;
  std::uint64_t id_;
};

}  // namespace comatch
