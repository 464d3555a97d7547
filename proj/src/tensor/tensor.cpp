#include "macdmp/tensor.hpp"

#include <cassert>
#include <cmath>

#include "macdmp/errors.hpp"
#include "macdmp/kernels.hpp"

namespace macdmp::tensor {

Tensor::Tensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw DomainError("negative tensor dimension");
}

Tensor::Tensor(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0 || data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw DomainError("tensor data length " + std::to_string(data_.size()) + " does not match shape [" +
                      std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "," + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad = Tensor::zeros_like(value);
  std::fill(grad.values().begin(), grad.values().end(), 0.0);
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor t) { return input(std::move(t), false); }

Var Tape::input(Tensor t, bool requires_grad) {
  Node n;
  n.value = std::move(t);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.param = &p;
  n.requires_grad = track_params_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const {
  const auto& n = nodes_[v.id];
  return n.param ? n.param->value : n.value;
}

Var Tape::push(Tensor value, std::vector<int> parents, BackwardFn fn) {
  assert(value.all_finite() && "non-finite tensor produced");
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
  auto& n = nodes_[id];
  if (n.param) {
    if (n.param->grad.size() != n.param->value.size()) n.param->zero_grad();
    return n.param->grad;
  }
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows()) {
    n.grad = Tensor::zeros_like(n.value);
  }
  return n.grad;
}

void Tape::backward(Var root) {
  const auto& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw DomainError("backward: root must be scalar, got " + rv.shape_str());
  }
  if (!nodes_[root.id].requires_grad) return;
  grad_buffer(root.id)[0] += 1.0;
  for (int id = root.id; id >= 0; --id) {
    auto& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

const Tensor& Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.param) return n.param->grad;
  static const Tensor empty;
  return n.grad.size() ? n.grad : empty;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DomainError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

void same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

void check_tape(Var a, Var b) {
  if (a.tape != b.tape) throw DomainError("operands belong to different tapes");
}

template <typename F, typename G>
Var unary(Var a, F f, G df) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape->push(std::move(y), {a.id}, [df, ai = a.id](Tape& t, int id) {
    if (!t.needs(ai)) return;
    const Tensor& x = t.value({&t, ai});
    const Tensor& g = t.grad_buffer(id);
    Tensor& gx = t.grad_buffer(ai);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  check_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (x.cols() != w.rows()) shape_error("matmul", x, w);
  Tensor y(x.rows(), w.cols());
  kernels::gemm_nn(x.rows(), w.cols(), x.cols(), x.data(), w.data(), y.data());
  return a.tape->push(std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int id) {
    const Tensor& x = t.value({&t, ai});
    const Tensor& w = t.value({&t, bi});
    const Tensor& g = t.grad_buffer(id);
    if (t.needs(ai)) {
      kernels::gemm_nt(x.rows(), x.cols(), w.cols(), g.data(), w.data(), t.grad_buffer(ai).data());
    }
    if (t.needs(bi)) {
      kernels::gemm_tn(w.rows(), w.cols(), x.rows(), x.data(), g.data(), t.grad_buffer(bi).data());
    }
  });
}

Var affine(Var x, Var w, Var b) {
  check_tape(x, w);
  check_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.cols() != wv.rows()) shape_error("affine", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("affine bias", wv, bv);
  Tensor y(xv.rows(), wv.cols());
  for (int r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    for (int c = 0; c < y.cols(); ++c) yr[c] = bv[c];
  }
  kernels::gemm_nn(xv.rows(), wv.cols(), xv.cols(), xv.data(), wv.data(), y.data());
  return x.tape->push(std::move(y), {x.id, w.id, b.id},
                      [xi = x.id, wi = w.id, bi = b.id](Tape& t, int id) {
                        const Tensor& xv = t.value({&t, xi});
                        const Tensor& wv = t.value({&t, wi});
                        const Tensor& g = t.grad_buffer(id);
                        if (t.needs(xi)) {
                          kernels::gemm_nt(xv.rows(), xv.cols(), wv.cols(), g.data(), wv.data(),
                                           t.grad_buffer(xi).data());
                        }
                        if (t.needs(wi)) {
                          kernels::gemm_tn(wv.rows(), wv.cols(), xv.rows(), xv.data(), g.data(),
                                           t.grad_buffer(wi).data());
                        }
                        if (t.needs(bi)) {
                          Tensor& gb = t.grad_buffer(bi);
                          for (int r = 0; r < g.rows(); ++r) {
                            const auto gr = g.row(r);
                            for (int c = 0; c < g.cols(); ++c) gb[c] += gr[c];
                          }
                        }
                      });
}

Var add(Var a, Var b) {
  check_tape(a, b);
  same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape->push(std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int id) {
    const Tensor& g = t.grad_buffer(id);
    for (int p : {ai, bi}) {
      if (!t.needs(p)) continue;
      Tensor& gp = t.grad_buffer(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_tape(a, b);
  same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.tape->push(std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int id) {
    const Tensor& g = t.grad_buffer(id);
    if (t.needs(ai)) {
      Tensor& ga = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_tape(a, b);
  same_shape("mul", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return a.tape->push(std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int id) {
    const Tensor& g = t.grad_buffer(id);
    const Tensor& av = t.value({&t, ai});
    const Tensor& bv = t.value({&t, bi});
    if (t.needs(ai)) {
      Tensor& ga = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.values()) v *= s;
  return a.tape->push(std::move(y), {a.id}, [ai = a.id, s](Tape& t, int id) {
    if (!t.needs(ai)) return;
    const Tensor& g = t.grad_buffer(id);
    Tensor& ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double x) {
                 const double th = std::tanh(x);
                 return 1.0 - th * th;
               });
}

Var layer_norm(Var a, double eps) {
  const Tensor& x = a.value();
  const int n = x.cols();
  Tensor y(x.rows(), n);
  Tensor inv_std(x.rows(), 1);
  for (int r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto yr = y.row(r);
    for (int c = 0; c < n; ++c) yr[c] = (xr[c] - mu) * is;
  }
  Tensor yhat = y;
  return a.tape->push(std::move(y), {a.id},
                      [ai = a.id, yhat = std::move(yhat), inv_std = std::move(inv_std)](Tape& t, int id) {
                        if (!t.needs(ai)) return;
                        const Tensor& g = t.grad_buffer(id);
                        Tensor& ga = t.grad_buffer(ai);
                        const int n = g.cols();
                        for (int r = 0; r < g.rows(); ++r) {
                          const auto gr = g.row(r);
                          const auto yr = yhat.row(r);
                          double gm = 0.0, gy = 0.0;
                          for (int c = 0; c < n; ++c) {
                            gm += gr[c];
                            gy += gr[c] * yr[c];
                          }
                          gm /= n;
                          gy /= n;
                          auto gar = ga.row(r);
                          for (int c = 0; c < n; ++c) gar[c] += inv_std[r] * (gr[c] - gm - yr[c] * gy);
                        }
                      });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat: no inputs");
  const int rows = parts[0].rows();
  int cols = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    check_tape(parts[0], p);
    if (p.rows() != rows) shape_error("concat", parts[0].value(), p.value());
    cols += p.cols();
    ids.push_back(p.id);
  }
  Tensor y(rows, cols);
  int off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (int r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), y.row(r).begin() + off);
    off += v.cols();
  }
  auto parents = ids;
  return parts[0].tape->push(std::move(y), std::move(parents), [ids](Tape& t, int id) {
    const Tensor& g = t.grad_buffer(id);
    int off = 0;
    for (int p : ids) {
      const int w = t.value({&t, p}).cols();
      if (t.needs(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (int r = 0; r < g.rows(); ++r) {
          const auto gr = g.row(r);
          auto gpr = gp.row(r);
          for (int c = 0; c < w; ++c) gpr[c] += gr[off + c];
        }
      }
      off += w;
    }
  });
}

Var slice(Var a, int col_begin, int col_end) {
  const Tensor& x = a.value();
  if (col_begin < 0 || col_end > x.cols() || col_begin > col_end) {
    throw DomainError("slice: columns [" + std::to_string(col_begin) + "," + std::to_string(col_end) +
                      ") out of range for " + x.shape_str());
  }
  const int w = col_end - col_begin;
  Tensor y(x.rows(), w);
  for (int r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    std::copy(xr.begin() + col_begin, xr.begin() + col_end, y.row(r).begin());
  }
  return a.tape->push(std::move(y), {a.id}, [ai = a.id, col_begin, w](Tape& t, int id) {
    if (!t.needs(ai)) return;
    const Tensor& g = t.grad_buffer(id);
    Tensor& ga = t.grad_buffer(ai);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < w; ++c) ga(r, col_begin + c) += g(r, c);
    }
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  return a.tape->push(Tensor(1, 1, s), {a.id}, [ai = a.id](Tape& t, int id) {
    if (!t.needs(ai)) return;
    const double g = t.grad_buffer(id)[0];
    for (auto& v : t.grad_buffer(ai).values()) v += g;
  });
}

Var mean(Var a) {
  const auto n = a.value().size();
  if (n == 0) throw DomainError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_sq(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return a.tape->push(Tensor(1, 1, s), {a.id}, [ai = a.id](Tape& t, int id) {
    if (!t.needs(ai)) return;
    const double g = t.grad_buffer(id)[0];
    const Tensor& x = t.value({&t, ai});
    Tensor& ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g * x[i];
  });
}

Var mse(Var pred, Var target) {
  const auto n = pred.value().size();
  if (n == 0) throw DomainError("mse: empty tensor");
  return scale(sum_sq(sub(pred, target)), 1.0 / static_cast<double>(n));
}

}  // namespace macdmp::tensor
