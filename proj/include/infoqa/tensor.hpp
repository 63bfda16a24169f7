#pragma once

// Dense float64 tensors with a dynamic reverse-mode tape.
//
// A Graph records one node per primitive application whose inputs require
// gradients. Nodes are appended in execution order, so the tape is already
// topologically sorted and backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace infoqa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Handle to shared row-major storage. Copies alias the same buffer, which is
// what lets a parameter collect its gradient across every use in a graph.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Direct write access for optimizers and finite differences. Do not mutate
  // a tensor that a live graph still needs for its backward pass.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();  // back to "absent"

  // Fresh storage holding a copy of the values, detached from any graph.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const noexcept { return s_ == other.s_; }

 private:
  friend class Graph;

  struct Storage {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;
  };

  std::vector<double>& grad_buffer() const;  // allocates zeros on first use

  std::shared_ptr<Storage> s_;
};

enum class Primitive {
  add,
  subtract,
  multiply,
  matmul,
  transpose,
  sigmoid,
  log,
  exp,
  mean,
  max,
  gather_rows,
  concat,
  scale,
};

std::string_view primitive_name(Primitive op);

// Extra operands for apply(); each primitive reads only the fields it needs.
struct PrimitiveArgs {
  std::optional<std::size_t> axis;  // mean/max: nullopt reduces everything
  bool keepdims = false;
  std::vector<std::size_t> rows;  // gather_rows
  double factor = 1.0;            // scale
  double log_floor = 0.0;         // log: clamp inputs below this value (0 = no clamp)
};

class Graph {
 public:
  enum class Mode { record, inference };

  Graph() = default;
  explicit Graph(Mode mode) : mode_(mode) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // add/subtract/multiply broadcast numpy-style (trailing dims, size-1 expands).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor subtract(const Tensor& a, const Tensor& b);
  Tensor multiply(const Tensor& a, const Tensor& b);

  // Rank-2 only: [n,k] x [k,m] -> [n,m].
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);

  Tensor sigmoid(const Tensor& a);
  // Finite results require a <= 709.
  Tensor exp(const Tensor& a);
  // floor == 0: strict domain, throws on any value <= 0.
  // floor > 0: inputs below floor are clamped to it and receive no gradient.
  Tensor log(const Tensor& a, double floor = 0.0);

  Tensor mean(const Tensor& a);
  Tensor mean(const Tensor& a, std::size_t axis, bool keepdims = false);
  // Ties send the gradient to the first maximal element along the axis.
  Tensor max(const Tensor& a, std::size_t axis, bool keepdims = false);

  Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
  Tensor concat(std::span<const Tensor> parts, std::size_t axis = 0);
  Tensor scale(const Tensor& a, double factor);

  Tensor apply(Primitive op, std::span<const Tensor> inputs, const PrimitiveArgs& args = {});

  // root must be a scalar that requires grad. Throws if any tensor reachable
  // through this tape already holds a gradient, so a second call without
  // zero_grad() is an error rather than a silent double accumulation.
  void backward(const Tensor& root);

  // Clears gradients of every tensor recorded on this tape (leaves included).
  void zero_grad();

  std::size_t node_count() const noexcept { return nodes_.size(); }
  Mode mode() const noexcept { return mode_; }

 private:
  using Pullback = std::function<void(std::span<const double> out_grad)>;

  struct Node {
    Primitive op;
    std::vector<Tensor> inputs;
    Tensor output;
    Pullback pullback;
  };

  bool tracks(std::span<const Tensor> inputs) const;
  Tensor record(Primitive op, std::vector<Tensor> inputs, Tensor output, Pullback pullback);
  Tensor binary(Primitive op, const Tensor& a, const Tensor& b);
  Tensor reduce(Primitive op, const Tensor& a, std::size_t axis, bool keepdims);

  Mode mode_ = Mode::record;
  std::vector<Node> nodes_;
};

// Composite helpers built from the primitives above.
Tensor sum(Graph& g, const Tensor& a);
Tensor log_softmax(Graph& g, const Tensor& a, std::size_t axis);
Tensor softmax(Graph& g, const Tensor& a, std::size_t axis);
Tensor constant_like(const Tensor& a, double value);

using ScalarFn = std::function<Tensor(Graph&)>;

// Max over every coordinate of every parameter of
//   |analytic - central difference| / max(1, |analytic|).
// f must be deterministic; it is re-evaluated twice per coordinate.
double grad_check(const ScalarFn& f, std::span<Tensor> params, double h = 1e-5);
double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& point,
                  double h = 1e-5);

}  // namespace infoqa
