#include "infoqa/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "infoqa/error.hpp"

namespace infoqa {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Numpy-style broadcast of two shapes, expressed as per-output-dim strides
// into each operand (stride 0 on expanded dims).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;

  template <class F>
  void each(F&& f) const {
    const std::size_t rank = out.size();
    const std::size_t total = shape_numel(out);
    if (rank == 0) {
      f(std::size_t{0}, std::size_t{0}, std::size_t{0});
      return;
    }
    const std::size_t inner = out[rank - 1];
    const std::size_t step_a = stride_a[rank - 1];
    const std::size_t step_b = stride_b[rank - 1];
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < total; o += inner) {
      for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * step_a, ib + k * step_b);
      for (std::size_t d = rank - 1; d-- > 0;) {
        ++idx[d];
        ia += stride_a[d];
        ib += stride_b[d];
        if (idx[d] < out[d]) break;
        ia -= stride_a[d] * out[d];
        ib -= stride_b[d] * out[d];
        idx[d] = 0;
      }
    }
  }
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
  const std::size_t offset = out.size() - shape.size();
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t running = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    strides[d + offset] = shape[d] == 1 ? 0 : running;
    running *= shape[d];
  }
  return strides;
}

Broadcast plan_broadcast(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      std::ostringstream msg;
      msg << op << ": cannot broadcast shapes " << shape_str(a) << " and " << shape_str(b)
          << " (output dimension " << i << ": " << da << " vs " << db << ")";
      throw shape_error(msg.str());
    }
    out[i] = std::max(da, db);
  }
  return {out, aligned_strides(a, out), aligned_strides(b, out)};
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.n = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdims) {
  Shape out = shape;
  if (keepdims) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

void require_rank2(std::string_view op, const Tensor& t) {
  if (t.rank() != 2) {
    std::ostringstream msg;
    msg << op << ": expected a rank-2 operand, got " << shape_str(t.shape());
    throw shape_error(msg.str());
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw shape_error("tensor: zero-sized dimension in " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    std::ostringstream msg;
    msg << "tensor: shape " << shape_str(shape) << " needs " << shape_numel(shape)
        << " values, got " << values.size();
    throw shape_error(msg.str());
  }
  s_ = std::make_shared<Storage>();
  s_->shape = std::move(shape);
  s_->data = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!s_) throw usage_error("tensor: use of undefined tensor");
  return s_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw shape_error("tensor: axis out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return values().size(); }

std::span<const double> Tensor::values() const {
  if (!s_) throw usage_error("tensor: use of undefined tensor");
  return s_->data;
}

std::span<double> Tensor::mutable_values() {
  if (!s_) throw usage_error("tensor: use of undefined tensor");
  return s_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw shape_error("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return s_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_rank2("at", *this);
  return s_->data[row * s_->shape[1] + col];
}

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!s_) throw usage_error("tensor: use of undefined tensor");
  s_->requires_grad = flag;
}

bool Tensor::has_grad() const { return s_ && s_->grad.has_value(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw usage_error("grad: tensor has no gradient");
  return *s_->grad;
}

void Tensor::zero_grad() {
  if (s_) s_->grad.reset();
}

Tensor Tensor::clone() const { return Tensor(shape(), s_->data, false); }

std::vector<double>& Tensor::grad_buffer() const {
  if (!s_->grad) s_->grad.emplace(s_->data.size(), 0.0);
  return *s_->grad;
}

// ---------------------------------------------------------------- Graph

std::string_view primitive_name(Primitive op) {
  switch (op) {
    case Primitive::add: return "add";
    case Primitive::subtract: return "subtract";
    case Primitive::multiply: return "multiply";
    case Primitive::matmul: return "matmul";
    case Primitive::transpose: return "transpose";
    case Primitive::sigmoid: return "sigmoid";
    case Primitive::log: return "log";
    case Primitive::exp: return "exp";
    case Primitive::mean: return "mean";
    case Primitive::max: return "max";
    case Primitive::gather_rows: return "gather_rows";
    case Primitive::concat: return "concat";
    case Primitive::scale: return "scale";
  }
  return "unknown";
}

bool Graph::tracks(std::span<const Tensor> inputs) const {
  if (mode_ == Mode::inference) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

Tensor Graph::record(Primitive op, std::vector<Tensor> inputs, Tensor output, Pullback pullback) {
  output.s_->requires_grad = true;
  nodes_.push_back({op, std::move(inputs), output, std::move(pullback)});
  return output;
}

Tensor Graph::binary(Primitive op, const Tensor& a, const Tensor& b) {
  const Broadcast plan = plan_broadcast(primitive_name(op), a.shape(), b.shape());
  std::vector<double> out(shape_numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  switch (op) {
    case Primitive::add:
      plan.each([&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
      break;
    case Primitive::subtract:
      plan.each([&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; });
      break;
    default:
      plan.each([&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
      break;
  }
  Tensor result(plan.out, std::move(out));
  const std::array<Tensor, 2> ins{a, b};
  if (!tracks(ins)) return result;

  return record(op, {a, b}, result, [op, plan, a, b](std::span<const double> g) mutable {
    const bool ga_on = a.requires_grad();
    const bool gb_on = b.requires_grad();
    std::vector<double>* ga = ga_on ? &a.grad_buffer() : nullptr;
    std::vector<double>* gb = gb_on ? &b.grad_buffer() : nullptr;
    const auto av = a.values();
    const auto bv = b.values();
    plan.each([&](std::size_t o, std::size_t i, std::size_t j) {
      switch (op) {
        case Primitive::add:
          if (ga) (*ga)[i] += g[o];
          if (gb) (*gb)[j] += g[o];
          break;
        case Primitive::subtract:
          if (ga) (*ga)[i] += g[o];
          if (gb) (*gb)[j] -= g[o];
          break;
        default:
          if (ga) (*ga)[i] += g[o] * bv[j];
          if (gb) (*gb)[j] += g[o] * av[i];
          break;
      }
    });
  });
}

Tensor Graph::add(const Tensor& a, const Tensor& b) { return binary(Primitive::add, a, b); }
Tensor Graph::subtract(const Tensor& a, const Tensor& b) { return binary(Primitive::subtract, a, b); }
Tensor Graph::multiply(const Tensor& a, const Tensor& b) { return binary(Primitive::multiply, a, b); }

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    std::ostringstream msg;
    msg << "matmul: inner dimensions differ (" << shape_str(a.shape()) << " x "
        << shape_str(b.shape()) << ": " << k << " vs " << b.dim(0) << ")";
    throw shape_error(msg.str());
  }
  std::vector<double> out(n * m);
  MutMap(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)).noalias() =
      ConstMap(a.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) *
      ConstMap(b.values().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  Tensor result({n, m}, std::move(out));
  const std::array<Tensor, 2> ins{a, b};
  if (!tracks(ins)) return result;

  return record(Primitive::matmul, {a, b}, result, [a, b, n, k, m](std::span<const double> g) mutable {
    const auto ni = static_cast<Eigen::Index>(n);
    const auto ki = static_cast<Eigen::Index>(k);
    const auto mi = static_cast<Eigen::Index>(m);
    ConstMap gm(g.data(), ni, mi);
    if (a.requires_grad()) {
      MutMap(a.grad_buffer().data(), ni, ki).noalias() +=
          gm * ConstMap(b.values().data(), ki, mi).transpose();
    }
    if (b.requires_grad()) {
      MutMap(b.grad_buffer().data(), ki, mi).noalias() +=
          ConstMap(a.values().data(), ni, ki).transpose() * gm;
    }
  });
}

Tensor Graph::transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(n * m);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
  Tensor result({m, n}, std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  return record(Primitive::transpose, {a}, result, [a, n, m](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
  });
}

Tensor Graph::sigmoid(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  Tensor result(a.shape(), std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  return record(Primitive::sigmoid, {a}, result, [a, result](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    const auto y = result.values();
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor Graph::exp(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = std::exp(av[i]);
    if (std::isinf(out[i]) && !std::isinf(av[i])) {
      std::ostringstream msg;
      msg << "exp: input " << av[i] << " at index " << i << " overflows float64";
      throw domain_error(msg.str());
    }
  }
  Tensor result(a.shape(), std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  return record(Primitive::exp, {a}, result, [a, result](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    const auto y = result.values();
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Tensor Graph::log(const Tensor& a, double floor) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    if (floor > 0.0) {
      out[i] = std::log(std::max(x, floor));
    } else if (x <= 0.0 || std::isnan(x)) {
      std::ostringstream msg;
      msg << "log: non-positive input " << x << " at index " << i;
      throw domain_error(msg.str());
    } else {
      out[i] = std::log(x);
    }
  }
  Tensor result(a.shape(), std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  return record(Primitive::log, {a}, result, [a, floor](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    const auto x = a.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (floor > 0.0 && x[i] < floor) continue;
      ga[i] += g[i] / x[i];
    }
  });
}

Tensor Graph::mean(const Tensor& a) {
  const auto av = a.values();
  double total = 0.0;
  for (double v : av) total += v;
  const double n = static_cast<double>(av.size());
  Tensor result = Tensor::scalar(total / n);
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  return record(Primitive::mean, {a}, result, [a, n](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    const double share = g[0] / n;
    for (double& v : ga) v += share;
  });
}

Tensor Graph::reduce(Primitive op, const Tensor& a, std::size_t axis, bool keepdims) {
  if (axis >= a.rank()) {
    std::ostringstream msg;
    msg << primitive_name(op) << ": axis " << axis << " out of range for shape " << shape_str(a.shape());
    throw shape_error(msg.str());
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  const auto av = a.values();
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> argmax;
  if (op == Primitive::max) argmax.resize(out.size());

  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      if (op == Primitive::mean) {
        double total = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) total += av[base + k * s.inner];
        out[o * s.inner + i] = total / static_cast<double>(s.n);
      } else {
        std::size_t best = base;
        for (std::size_t k = 1; k < s.n; ++k) {
          const std::size_t idx = base + k * s.inner;
          if (av[idx] > av[best]) best = idx;
        }
        out[o * s.inner + i] = av[best];
        argmax[o * s.inner + i] = best;
      }
    }
  }
  Tensor result(reduced_shape(a.shape(), axis, keepdims), std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  if (op == Primitive::max) {
    return record(op, {a}, result, [a, argmax = std::move(argmax)](std::span<const double> g) mutable {
      if (!a.requires_grad()) return;
      auto& ga = a.grad_buffer();
      for (std::size_t j = 0; j < argmax.size(); ++j) ga[argmax[j]] += g[j];
    });
  }
  return record(op, {a}, result, [a, s](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    const double inv = 1.0 / static_cast<double>(s.n);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t i = 0; i < s.inner; ++i)
          ga[(o * s.n + k) * s.inner + i] += g[o * s.inner + i] * inv;
  });
}

Tensor Graph::mean(const Tensor& a, std::size_t axis, bool keepdims) {
  return reduce(Primitive::mean, a, axis, keepdims);
}

Tensor Graph::max(const Tensor& a, std::size_t axis, bool keepdims) {
  return reduce(Primitive::max, a, axis, keepdims);
}

Tensor Graph::gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() < 1) throw shape_error("gather_rows: operand must have rank >= 1");
  if (rows.empty()) throw shape_error("gather_rows: empty row list");
  const std::size_t n = a.dim(0);
  const std::size_t width = a.numel() / n;
  const auto av = a.values();
  std::vector<double> out(rows.size() * width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      std::ostringstream msg;
      msg << "gather_rows: row " << rows[r] << " out of range for shape " << shape_str(a.shape());
      throw shape_error(msg.str());
    }
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  Shape shape = a.shape();
  shape[0] = rows.size();
  Tensor result(std::move(shape), std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return record(Primitive::gather_rows, {a}, result,
                [a, width, saved = std::move(saved)](std::span<const double> g) mutable {
                  if (!a.requires_grad()) return;
                  auto& ga = a.grad_buffer();
                  for (std::size_t r = 0; r < saved.size(); ++r)
                    for (std::size_t c = 0; c < width; ++c) ga[saved[r] * width + c] += g[r * width + c];
                });
}

Tensor Graph::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw shape_error("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw shape_error("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw shape_error("concat: shape " + shape_str(s) + " does not match " + shape_str(first) +
                        " off axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_axis(out_shape, axis);
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) chunk[p] = parts[p].dim(axis) * whole.inner;

  std::vector<double> out(shape_numel(out_shape));
  std::size_t pos = 0;
  for (std::size_t o = 0; o < whole.outer; ++o) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto pv = parts[p].values();
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk[p]), chunk[p],
                  out.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += chunk[p];
    }
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (!tracks(parts)) return result;

  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record(Primitive::concat, inputs, result,
                [inputs, chunk, outer = whole.outer](std::span<const double> g) mutable {
                  std::size_t pos = 0;
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t p = 0; p < inputs.size(); ++p) {
                      if (inputs[p].requires_grad()) {
                        auto& gp = inputs[p].grad_buffer();
                        for (std::size_t c = 0; c < chunk[p]; ++c) gp[o * chunk[p] + c] += g[pos + c];
                      }
                      pos += chunk[p];
                    }
                  }
                });
}

Tensor Graph::scale(const Tensor& a, double factor) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  Tensor result(a.shape(), std::move(out));
  const std::array<Tensor, 1> ins{a};
  if (!tracks(ins)) return result;

  return record(Primitive::scale, {a}, result, [a, factor](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto& ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor Graph::apply(Primitive op, std::span<const Tensor> inputs, const PrimitiveArgs& args) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw shape_error(std::string(primitive_name(op)) + ": expected " + std::to_string(n) +
                        " operand(s), got " + std::to_string(inputs.size()));
    }
  };
  switch (op) {
    case Primitive::add: need(2); return add(inputs[0], inputs[1]);
    case Primitive::subtract: need(2); return subtract(inputs[0], inputs[1]);
    case Primitive::multiply: need(2); return multiply(inputs[0], inputs[1]);
    case Primitive::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case Primitive::transpose: need(1); return transpose(inputs[0]);
    case Primitive::sigmoid: need(1); return sigmoid(inputs[0]);
    case Primitive::log: need(1); return log(inputs[0], args.log_floor);
    case Primitive::exp: need(1); return exp(inputs[0]);
    case Primitive::mean:
      need(1);
      return args.axis ? mean(inputs[0], *args.axis, args.keepdims) : mean(inputs[0]);
    case Primitive::max:
      need(1);
      if (!args.axis) throw shape_error("max: an axis is required");
      return max(inputs[0], *args.axis, args.keepdims);
    case Primitive::gather_rows: need(1); return gather_rows(inputs[0], args.rows);
    case Primitive::concat: return concat(inputs, args.axis.value_or(0));
    case Primitive::scale: need(1); return scale(inputs[0], args.factor);
  }
  throw shape_error("apply: unknown primitive");
}

void Graph::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw usage_error("backward: root must be a scalar, got shape " +
                      (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  if (!root.requires_grad()) throw usage_error("backward: root does not require grad");

  auto stale = [](const Tensor& t) { return t.requires_grad() && t.has_grad(); };
  bool any_stale = stale(root);
  for (const Node& node : nodes_) {
    if (any_stale) break;
    any_stale = stale(node.output) ||
                std::any_of(node.inputs.begin(), node.inputs.end(), stale);
  }
  if (any_stale) {
    throw usage_error("backward: gradients from a previous pass are still present; call zero_grad() first");
  }

  Tensor seed = root;
  seed.grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->pullback(it->output.grad());
  }
}

void Graph::zero_grad() {
  for (Node& node : nodes_) {
    node.output.zero_grad();
    for (Tensor& in : node.inputs) in.zero_grad();
  }
}

// ---------------------------------------------------------------- composites

Tensor sum(Graph& g, const Tensor& a) {
  return g.scale(g.mean(a), static_cast<double>(a.numel()));
}

Tensor log_softmax(Graph& g, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw shape_error("log_softmax: axis out of range for " + shape_str(a.shape()));
  // The shift is a constant: log-softmax is invariant to it, so no gradient flows through it.
  const AxisSplit s = split_axis(a.shape(), axis);
  const auto av = a.values();
  std::vector<double> shift(s.outer * s.inner, -std::numeric_limits<double>::infinity());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i)
        shift[o * s.inner + i] = std::max(shift[o * s.inner + i], av[(o * s.n + k) * s.inner + i]);
  const Tensor centered = g.subtract(a, Tensor(reduced_shape(a.shape(), axis, true), std::move(shift)));
  const Tensor total = g.scale(g.mean(g.exp(centered), axis, true), static_cast<double>(s.n));
  return g.subtract(centered, g.log(total));
}

Tensor softmax(Graph& g, const Tensor& a, std::size_t axis) { return g.exp(log_softmax(g, a, axis)); }

Tensor constant_like(const Tensor& a, double value) { return Tensor::full(a.shape(), value); }

// ---------------------------------------------------------------- grad check

double grad_check(const ScalarFn& f, std::span<Tensor> params, double h) {
  if (h <= 0.0) throw usage_error("grad_check: step must be positive");
  for (Tensor& p : params) {
    if (!p.requires_grad()) throw usage_error("grad_check: every parameter must require grad");
    p.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    const Tensor y = f(g);
    if (y.numel() != 1) throw usage_error("grad_check: f must return a scalar, got " + shape_str(y.shape()));
    g.backward(y);
    for (Tensor& p : params) {
      analytic.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                         : std::vector<double>(p.numel(), 0.0));
    }
    g.zero_grad();
  }
  for (Tensor& p : params) p.zero_grad();

  auto eval = [&] {
    Graph g(Graph::Mode::inference);
    return f(g).item();
  };
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto v = params[t].mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double original = v[i];
      v[i] = original + h;
      const double up = eval();
      v[i] = original - h;
      const double down = eval();
      v[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& point, double h) {
  Tensor x(point.shape(), std::vector<double>(point.values().begin(), point.values().end()), true);
  std::array<Tensor, 1> params{x};
  return grad_check([&](Graph& g) { return f(g, x); }, params, h);
}

}  // namespace infoqa
