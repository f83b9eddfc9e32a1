#include "ipa/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "ipa/errors.hpp"

namespace ipa::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

thread_local bool g_grad_enabled = true;

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(kind) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

void require_rank2(const char* kind, const Var& a) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(kind) + ": expected rank-2 operand, got " + to_string(a.shape()));
  }
}

void require_same(const char* kind, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_fail(kind, a.shape(), b.shape());
}

// Wraps `value` as the output of `kind`. A node with a derivative rule is only
// recorded if tracking is on and some input needs a gradient.
Var record(const char* kind, Tensor value, std::vector<Var> inputs,
           std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->kind = kind;
  if (g_grad_enabled &&
      std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); })) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(rule);
  }
  return Var::from_node(std::move(node));
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

// ---- Node / Var -----------------------------------------------------------

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

Var parameter(Tensor value) { return Var(std::move(value), true); }
Var constant(Tensor value) { return Var(std::move(value), false); }

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- linear algebra -------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  Tensor out({a.rows(), b.cols()});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  return record("matmul", std::move(out), {a, b}, [](Node& self) {
    const auto g = as_matrix(self.grad);
    Node& lhs = input(self, 0);
    Node& rhs = input(self, 1);
    if (lhs.requires_grad) {
      as_matrix(lhs.grad_buffer()).noalias() += g * as_matrix(rhs.value).transpose();
    }
    if (rhs.requires_grad) {
      as_matrix(rhs.grad_buffer()).noalias() += as_matrix(lhs.value).transpose() * g;
    }
  });
}

Var transpose(const Var& a) {
  require_rank2("transpose", a);
  Tensor out({a.cols(), a.rows()});
  as_matrix(out) = as_matrix(a.value()).transpose();
  return record("transpose", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (in.requires_grad) as_matrix(in.grad_buffer()) += as_matrix(self.grad).transpose();
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return record("reshape", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  Tensor out = a.value();
  out.add_(b.value());
  return record("add", std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->grad_buffer().add_(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return record("sub", std::move(out), {a, b}, [](Node& self) {
    if (input(self, 0).requires_grad) input(self, 0).grad_buffer().add_(self.grad);
    if (input(self, 1).requires_grad) {
      auto& g = input(self, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return record("mul", std::move(out), {a, b}, [](Node& self) {
    Node& x = input(self, 0);
    Node& y = input(self, 1);
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  out.scale_(c);
  return record("scale", std::move(out), {a}, [c](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += c;
  return record("add_scalar", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (in.requires_grad) in.grad_buffer().add_(self.grad);
  });
}

Var exp(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return record("exp", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Var log(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::log(v);
  return record("log", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / in.value[i];
  });
}

Var square(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v * v;
  return record("square", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * in.value[i] * self.grad[i];
  });
}

Var power(const Var& a, double exponent) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::pow(v, exponent);
  return record("power", std::move(out), {a}, [exponent](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * exponent * std::pow(in.value[i], exponent - 1.0);
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return record("relu", std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

// ---- reductions and broadcasting -------------------------------------------

Var sum(const Var& a, std::size_t axis) {
  require_rank2("sum", a);
  if (axis > 1) throw ShapeError("sum: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out(axis == 0 ? Shape{1, c} : Shape{r, 1});
  const auto& v = a.value();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += v(i, j);
  }
  return record("sum", std::move(out), {a}, [axis](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += self.grad[axis == 0 ? j : i];
    }
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return record("sum_all", Tensor::scalar(s), {a}, [](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    const double g0 = self.grad[0];
    for (auto& g : in.grad_buffer().values()) g += g0;
  });
}

Var broadcast(const Var& a, std::size_t axis, std::size_t count) {
  require_rank2("broadcast", a);
  if (axis > 1 || a.shape()[axis] != 1 || count == 0) {
    throw ShapeError("broadcast: cannot expand axis " + std::to_string(axis) + " of " +
                     to_string(a.shape()) + " to " + std::to_string(count));
  }
  const std::size_t r = axis == 0 ? count : a.rows();
  const std::size_t c = axis == 1 ? count : a.cols();
  Tensor out({r, c});
  const auto& v = a.value();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out(i, j) = v[axis == 0 ? j : i];
  }
  return record("broadcast", std::move(out), {a}, [axis](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < self.grad.rows(); ++i) {
      for (std::size_t j = 0; j < self.grad.cols(); ++j) g[axis == 0 ? j : i] += self.grad(i, j);
    }
  });
}

Var softmax(const Var& a, std::size_t axis) {
  require_rank2("softmax", a);
  if (axis > 1) throw ShapeError("softmax: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t lines = axis == 0 ? c : r;
  const std::size_t len = axis == 0 ? r : c;
  // Element t of line s lives at index s*outer + t*inner.
  const std::size_t outer = axis == 0 ? 1 : c;
  const std::size_t inner = axis == 0 ? c : 1;
  Tensor out = a.value();
  for (std::size_t s = 0; s < lines; ++s) {
    double* base = out.data() + s * outer;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, base[t * inner]);
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      double& v = base[t * inner];
      v = std::exp(v - mx);
      z += v;
    }
    for (std::size_t t = 0; t < len; ++t) base[t * inner] /= z;
  }
  return record("softmax", std::move(out), {a}, [=](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t s = 0; s < lines; ++s) {
      const double* y = self.value.data() + s * outer;
      const double* gy = self.grad.data() + s * outer;
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += y[t * inner] * gy[t * inner];
      double* gx = g.data() + s * outer;
      for (std::size_t t = 0; t < len; ++t) {
        gx[t * inner] += y[t * inner] * (gy[t * inner] - dot);
      }
    }
  });
}

Var sqdist(const Var& x, const Var& centers) {
  require_rank2("sqdist", x);
  require_rank2("sqdist", centers);
  if (x.rows() != centers.rows()) shape_fail("sqdist", x.shape(), centers.shape());
  const std::size_t n = x.rows(), m = x.cols(), p_count = centers.cols();
  Tensor out({p_count, m});
  const auto& xv = x.value();
  const auto& cv = centers.value();
  for (std::size_t p = 0; p < p_count; ++p) {
    for (std::size_t j = 0; j < m; ++j) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double diff = xv(i, j) - cv(i, p);
        d += diff * diff;
      }
      out(p, j) = d;
    }
  }
  return record("sqdist", std::move(out), {x, centers}, [=](Node& self) {
    Node& xs = input(self, 0);
    Node& cs = input(self, 1);
    Tensor* gx = xs.requires_grad ? &xs.grad_buffer() : nullptr;
    Tensor* gc = cs.requires_grad ? &cs.grad_buffer() : nullptr;
    for (std::size_t p = 0; p < p_count; ++p) {
      for (std::size_t j = 0; j < m; ++j) {
        const double g2 = 2.0 * self.grad(p, j);
        for (std::size_t i = 0; i < n; ++i) {
          const double diff = xs.value(i, j) - cs.value(i, p);
          if (gx) (*gx)(i, j) += g2 * diff;
          if (gc) (*gc)(i, p) -= g2 * diff;
        }
      }
    }
  });
}

// ---- slicing and concatenation --------------------------------------------

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_rows", a);
  if (begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + to_string(a.shape()));
  }
  const std::size_t c = a.cols();
  const auto& v = a.value().storage();
  Tensor out({end - begin, c},
             std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                 v.begin() + static_cast<std::ptrdiff_t>(end * c)));
  return record("slice_rows", std::move(out), {a}, [begin, c](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    double* g = in.grad_buffer().data() + begin * c;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", a);
  if (begin >= end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + to_string(a.shape()));
  }
  const std::size_t r = a.rows(), w = end - begin;
  Tensor out({r, w});
  const auto& v = a.value();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out(i, j) = v(i, begin + j);
  }
  return record("slice_cols", std::move(out), {a}, [begin, r, w](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) g(i, begin + j) += self.grad(i, j);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    require_rank2("concat_rows", p);
    if (p.cols() != c) shape_fail("concat_rows", parts[0].shape(), p.shape());
    r += p.rows();
  }
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& p : parts) {
    values.insert(values.end(), p.value().storage().begin(), p.value().storage().end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return record("concat_rows", Tensor({r, c}, std::move(values)), std::move(inputs),
                [](Node& self) {
                  std::size_t offset = 0;
                  for (auto& in : self.inputs) {
                    const std::size_t count = in->value.size();
                    if (in->requires_grad) {
                      auto& g = in->grad_buffer();
                      for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[offset + i];
                    }
                    offset += count;
                  }
                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != r) shape_fail("concat_cols", parts[0].shape(), p.shape());
    c += p.cols();
  }
  Tensor out({r, c});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    }
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return record("concat_cols", std::move(out), std::move(inputs), [r](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t w = in->value.cols();
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < w; ++j) g(i, j) += self.grad(i, offset + j);
        }
      }
      offset += w;
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::int32_t> ids) {
  require_rank2("gather_rows", table);
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  const std::size_t rows = table.rows(), c = table.cols();
  Tensor out({ids.size(), c});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= rows) {
      throw IndexError("gather_rows: id " + std::to_string(ids[t]) + " outside [0, " +
                       std::to_string(rows) + ")");
    }
    const double* src = table.value().data() + static_cast<std::size_t>(ids[t]) * c;
    std::copy(src, src + c, out.data() + t * c);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return record("gather_rows", std::move(out), {table}, [saved = std::move(saved), c](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t t = 0; t < saved.size(); ++t) {
      double* dst = g.data() + static_cast<std::size_t>(saved[t]) * c;
      const double* src = self.grad.data() + t * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Var masked_fill(const Var& a, const Tensor& mask, double value) {
  if (mask.shape() != a.shape()) shape_fail("masked_fill", a.shape(), mask.shape());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] != 0.0) out[i] = value;
  }
  return record("masked_fill", std::move(out), {a}, [mask](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (mask[i] == 0.0) g[i] += self.grad[i];
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::int32_t> targets) {
  require_rank2("cross_entropy", logits);
  const std::size_t vocab = logits.rows(), m = logits.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     to_string(logits.shape()));
  }
  for (auto t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
  }
  // probs holds the column softmax, reused by the derivative rule.
  Tensor probs = logits.value();
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < vocab; ++v) mx = std::max(mx, probs(v, j));
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) {
      const double e = std::exp(probs(v, j) - mx);
      probs(v, j) = e;
      z += e;
    }
    const auto tj = static_cast<std::size_t>(targets[j]);
    total += std::log(z) + mx - logits.value()(tj, j);
    for (std::size_t v = 0; v < vocab; ++v) probs(v, j) /= z;
  }
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return record("cross_entropy", Tensor::scalar(total / static_cast<double>(m)), {logits},
                [probs = std::move(probs), saved = std::move(saved)](Node& self) {
                  Node& in = input(self, 0);
                  if (!in.requires_grad) return;
                  auto& g = in.grad_buffer();
                  const std::size_t cols = probs.cols();
                  const double coef = self.grad[0] / static_cast<double>(cols);
                  for (std::size_t i = 0; i < probs.size(); ++i) g[i] += coef * probs[i];
                  for (std::size_t j = 0; j < cols; ++j) {
                    g(static_cast<std::size_t>(saved[j]), j) -= coef;
                  }
                });
}

// ---- reverse pass ---------------------------------------------------------

namespace {

// Post-order over nodes that require gradients; iterative to bound stack use.
std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) {
    throw ContractError("backward: loss was not produced under gradient tracking");
  }
  const auto order = topological_order(root);
  if (root->is_leaf()) {
    root->grad_buffer()[0] += 1.0;
    return;
  }
  root->grad = Tensor(root->value.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf() || node->grad.empty()) continue;
    node->backward(*node);
    node->grad = Tensor();
  }
}

void zero_grad(std::span<Parameter> params) {
  for (auto& p : params) p.var.zero_grad();
}

std::size_t graph_size(const Var& root) {
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    for (auto& in : n->inputs) {
      if (seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  return seen.size();
}

}  // namespace ipa::ad
