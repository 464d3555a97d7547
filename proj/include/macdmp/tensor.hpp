#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

// Row-major float64 matrices with a small reverse-mode tape.
namespace macdmp::tensor {

class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0);
  Tensor(int rows, int cols, std::vector<double> data);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.rows(), t.cols()); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::vector<int> shape() const { return {rows_, cols_}; }
  std::size_t size() const { return data_.size(); }
  std::string shape_str() const;

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> row(int r) { return {data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  bool operator==(const Tensor&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}
  void zero_grad();
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
};

// Records operations in creation order; backward() walks them in reverse.
// With track_params == false parameters enter as constants, which is what
// inference and input-gradient queries want.
class Tape {
 public:
  explicit Tape(bool track_params = true) : track_params_(track_params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var input(Tensor t, bool requires_grad);
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Seeds d(root)/d(root) = 1; root must be 1x1. Parameter gradients are
  // accumulated into Parameter::grad, input gradients are read with grad().
  void backward(Var root);
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  using BackwardFn = std::function<void(Tape&, int)>;
  Var push(Tensor value, std::vector<int> parents, BackwardFn fn);
  // Gradient buffer of node `id`, allocated on first use.
  Tensor& grad_buffer(int id);
  bool needs(int id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Parameter* param = nullptr;
    std::vector<int> parents;
    BackwardFn backward;
    Tensor grad;
    bool requires_grad = false;
  };

  bool track_params_;
  std::vector<Node> nodes_;
};

// Shape mismatches raise DomainError naming both shapes.
Var matmul(Var a, Var b);
Var affine(Var x, Var w, Var b);  // x*w + b, b is 1 x cols broadcast over rows
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var silu(Var a);
Var tanh(Var a);
Var layer_norm(Var a, double eps = 1e-5);  // per row, no affine
Var concat(std::initializer_list<Var> parts);  // along columns
Var concat(std::span<const Var> parts);
Var slice(Var a, int col_begin, int col_end);
Var mean(Var a);
Var sum_sq(Var a);
Var sum(Var a);
Var mse(Var pred, Var target);  // mean((pred - target)^2)

}  // namespace macdmp::tensor
