#include "sleepcc/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace sleepcc {

namespace {

void ensure_grad(Tensor::Node& n) {
  if (n.grad.size() != n.value.size()) {
    n.grad.assign(n.value.size(), 0.0);
  }
}

std::string shape_str(int r, int c) {
  return "(" + std::to_string(r) + ", " + std::to_string(c) + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

}  // namespace

Tensor make_op(int rows, int cols, std::vector<double> value,
               std::vector<std::shared_ptr<Tensor::Node>> parents,
               std::function<void(Tensor::Node&)> backward_fn) {
  Tensor t;
  auto n = std::make_shared<Tensor::Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) {
    if (p->requires_grad) needs = true;
  }
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  t.node_ = std::move(n);
  return t;
}

Tensor::Tensor(int rows, int cols, std::vector<double> data,
               bool requires_grad) {
  if (rows < 1 || cols < 1 ||
      data.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("tensor data length does not match shape " +
                     shape_str(rows, cols));
  }
  node_ = std::make_shared<Node>();
  node_->rows = rows;
  node_->cols = cols;
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return Tensor(rows, cols,
                std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                requires_grad);
}

Tensor Tensor::full(int rows, int cols, double v, bool requires_grad) {
  return Tensor(rows, cols,
                std::vector<double>(static_cast<std::size_t>(rows) * cols, v),
                requires_grad);
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, {v}); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor");
  return node_->value[0];
}

double Tensor::at(int r, int c) const {
  return node_->value[static_cast<std::size_t>(r) * cols() + c];
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), 0.0);
  node_->consumed = false;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     shape_str(a.rows(), a.cols()) + " x " +
                     shape_str(b.rows(), b.cols()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto an = a.node(), bn = b.node();
  return make_op(m, n, std::move(out), {an, bn}, [an, bn, m, k, n](
                                                     Tensor::Node& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      ensure_grad(*an);
      for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = &g[static_cast<std::size_t>(i) * n];
          const double* brow = &bn->value[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          an->grad[static_cast<std::size_t>(i) * k + p] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      for (int i = 0; i < m; ++i) {
        const double* grow = &g[static_cast<std::size_t>(i) * n];
        const double* arow = &an->value[static_cast<std::size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
          const double aip = arow[p];
          if (aip == 0.0) continue;
          double* brow = &bn->grad[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(j) * m + i] = a.at(i, j);
    }
  }
  auto an = a.node();
  return make_op(n, m, std::move(out), {an}, [an, m, n](Tensor::Node& self) {
    ensure_grad(*an);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        an->grad[static_cast<std::size_t>(i) * n + j] +=
            self.grad[static_cast<std::size_t>(j) * m + i];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  // Equal shapes, or b as a (1, n) row bias broadcast over a's rows.
  const bool broadcast = b.rows() == 1 && a.cols() == b.cols() && a.rows() > 1;
  if (!broadcast) require_same_shape(a, b, "add");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(i) * n + j] += b.at(broadcast ? 0 : i, j);
    }
  }
  auto an = a.node(), bn = b.node();
  return make_op(m, n, std::move(out), {an, bn},
                 [an, bn, m, n, broadcast](Tensor::Node& self) {
                   if (an->requires_grad) {
                     ensure_grad(*an);
                     for (std::size_t i = 0; i < self.grad.size(); ++i) {
                       an->grad[i] += self.grad[i];
                     }
                   }
                   if (bn->requires_grad) {
                     ensure_grad(*bn);
                     if (broadcast) {
                       for (int i = 0; i < m; ++i) {
                         for (int j = 0; j < n; ++j) {
                           bn->grad[static_cast<std::size_t>(j)] +=
                               self.grad[static_cast<std::size_t>(i) * n + j];
                         }
                       }
                     } else {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         bn->grad[i] += self.grad[i];
                       }
                     }
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_op(m, n, std::move(out), {an, bn}, [an, bn](Tensor::Node& self) {
    if (an->requires_grad) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        an->grad[i] += self.grad[i] * bn->value[i];
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        bn->grad[i] += self.grad[i] * an->value[i];
      }
    }
  });
}

namespace {

// Shared scaffolding for unary elementwise ops: f(value) with derivative
// expressed from the output value and/or input value.
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& x : out) x = fwd(x);
  auto an = a.node();
  auto out_copy = out;  // captured for backward rules using f(x)
  return make_op(a.rows(), a.cols(), std::move(out), {an},
                 [an, bwd, out_copy = std::move(out_copy)](Tensor::Node& self) {
                   ensure_grad(*an);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     an->grad[i] += self.grad[i] * bwd(an->value[i], out_copy[i]);
                   }
                 });
}

}  // namespace

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor softmax_rows(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(a.at(i, j) - mx);
      out[static_cast<std::size_t>(i) * n + j] = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] /= z;
  }
  auto an = a.node();
  auto y = out;
  return make_op(m, n, std::move(out), {an},
                 [an, m, n, y = std::move(y)](Tensor::Node& self) {
                   ensure_grad(*an);
                   for (int i = 0; i < m; ++i) {
                     double dot = 0.0;
                     for (int j = 0; j < n; ++j) {
                       const std::size_t idx =
                           static_cast<std::size_t>(i) * n + j;
                       dot += self.grad[idx] * y[idx];
                     }
                     for (int j = 0; j < n; ++j) {
                       const std::size_t idx =
                           static_cast<std::size_t>(i) * n + j;
                       an->grad[idx] += y[idx] * (self.grad[idx] - dot);
                     }
                   }
                 });
}

Tensor log_softmax_rows(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  std::vector<double> soft(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(a.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + j;
      out[idx] = a.at(i, j) - lse;
      soft[idx] = std::exp(out[idx]);
    }
  }
  auto an = a.node();
  return make_op(m, n, std::move(out), {an},
                 [an, m, n, soft = std::move(soft)](Tensor::Node& self) {
                   ensure_grad(*an);
                   for (int i = 0; i < m; ++i) {
                     double gsum = 0.0;
                     for (int j = 0; j < n; ++j) {
                       gsum += self.grad[static_cast<std::size_t>(i) * n + j];
                     }
                     for (int j = 0; j < n; ++j) {
                       const std::size_t idx =
                           static_cast<std::size_t>(i) * n + j;
                       an->grad[idx] += self.grad[idx] - soft[idx] * gsum;
                     }
                   }
                 });
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps) {
  if (gain.rows() != 1 || gain.cols() != a.cols() || bias.rows() != 1 ||
      bias.cols() != a.cols()) {
    throw ShapeError("layer_norm: gain/bias must be (1, cols) vectors, got " +
                     shape_str(gain.rows(), gain.cols()) + " and " +
                     shape_str(bias.rows(), bias.cols()) + " for input " +
                     shape_str(a.rows(), a.cols()));
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  std::vector<double> xhat(static_cast<std::size_t>(m) * n);
  std::vector<double> inv_sigma(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += a.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = a.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + j;
      xhat[idx] = (a.at(i, j) - mu) * is;
      out[idx] = gain.at(0, j) * xhat[idx] + bias.at(0, j);
    }
  }
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  return make_op(
      m, n, std::move(out), {an, gn, bn},
      [an, gn, bn, m, n, xhat = std::move(xhat),
       inv_sigma = std::move(inv_sigma)](Tensor::Node& self) {
        for (int i = 0; i < m; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * n + j;
            const double dxhat = self.grad[idx] * gn->value[
                static_cast<std::size_t>(j)];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[idx];
          }
          mean_dxhat /= n;
          mean_dxhat_xhat /= n;
          if (an->requires_grad) {
            ensure_grad(*an);
            for (int j = 0; j < n; ++j) {
              const std::size_t idx = static_cast<std::size_t>(i) * n + j;
              const double dxhat = self.grad[idx] * gn->value[
                  static_cast<std::size_t>(j)];
              an->grad[idx] += inv_sigma[static_cast<std::size_t>(i)] *
                               (dxhat - mean_dxhat -
                                xhat[idx] * mean_dxhat_xhat);
            }
          }
          if (gn->requires_grad) {
            ensure_grad(*gn);
            for (int j = 0; j < n; ++j) {
              const std::size_t idx = static_cast<std::size_t>(i) * n + j;
              gn->grad[static_cast<std::size_t>(j)] +=
                  self.grad[idx] * xhat[idx];
            }
          }
          if (bn->requires_grad) {
            ensure_grad(*bn);
            for (int j = 0; j < n; ++j) {
              bn->grad[static_cast<std::size_t>(j)] +=
                  self.grad[static_cast<std::size_t>(i) * n + j];
            }
          }
        }
      });
}

Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return a;  // exact identity at evaluation
  std::vector<double> mask(a.data().size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 - p;
  for (double& m : mask) m = unit(rng) < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto an = a.node();
  return make_op(a.rows(), a.cols(), std::move(out), {an},
                 [an, mask = std::move(mask)](Tensor::Node& self) {
                   ensure_grad(*an);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     an->grad[i] += self.grad[i] * mask[i];
                   }
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int n = parts[0].cols();
  int m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column mismatch " +
                       shape_str(p.rows(), p.cols()) + " vs (*, " +
                       std::to_string(n) + ")");
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m) * n);
  std::vector<std::shared_ptr<Tensor::Node>> parents;
  std::vector<int> row_offsets;
  int off = 0;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
    row_offsets.push_back(off);
    off += p.rows();
  }
  return make_op(m, n, std::move(out), parents,
                 [parents, row_offsets, n](Tensor::Node& self) {
                   for (std::size_t k = 0; k < parents.size(); ++k) {
                     auto& p = *parents[k];
                     if (!p.requires_grad) continue;
                     ensure_grad(p);
                     const std::size_t base =
                         static_cast<std::size_t>(row_offsets[k]) * n;
                     for (std::size_t i = 0; i < p.value.size(); ++i) {
                       p.grad[i] += self.grad[base + i];
                     }
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int m = parts[0].rows();
  int n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch " +
                       shape_str(p.rows(), p.cols()) + " vs (" +
                       std::to_string(m) + ", *)");
    }
    n += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  std::vector<std::shared_ptr<Tensor::Node>> parents;
  std::vector<int> col_offsets;
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < p.cols(); ++j) {
        out[static_cast<std::size_t>(i) * n + off + j] = p.at(i, j);
      }
    }
    parents.push_back(p.node());
    col_offsets.push_back(off);
    off += p.cols();
  }
  return make_op(m, n, std::move(out), parents,
                 [parents, col_offsets, m, n](Tensor::Node& self) {
                   for (std::size_t k = 0; k < parents.size(); ++k) {
                     auto& p = *parents[k];
                     if (!p.requires_grad) continue;
                     ensure_grad(p);
                     const int pc = p.cols;
                     for (int i = 0; i < m; ++i) {
                       for (int j = 0; j < pc; ++j) {
                         p.grad[static_cast<std::size_t>(i) * pc + j] +=
                             self.grad[static_cast<std::size_t>(i) * n +
                                       col_offsets[k] + j];
                       }
                     }
                   }
                 });
}

Tensor slice_rows(const Tensor& a, int start, int len) {
  if (start < 0 || len < 1 || start + len > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside " +
                     shape_str(a.rows(), a.cols()));
  }
  const int n = a.cols();
  std::vector<double> out(a.data().begin() + static_cast<std::size_t>(start) * n,
                          a.data().begin() +
                              static_cast<std::size_t>(start + len) * n);
  auto an = a.node();
  return make_op(len, n, std::move(out), {an},
                 [an, start, n](Tensor::Node& self) {
                   ensure_grad(*an);
                   const std::size_t base = static_cast<std::size_t>(start) * n;
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     an->grad[base + i] += self.grad[i];
                   }
                 });
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  if (start < 0 || len < 1 || start + len > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside " +
                     shape_str(a.rows(), a.cols()));
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * len);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < len; ++j) {
      out[static_cast<std::size_t>(i) * len + j] = a.at(i, start + j);
    }
  }
  auto an = a.node();
  return make_op(m, len, std::move(out), {an},
                 [an, start, len, m, n](Tensor::Node& self) {
                   ensure_grad(*an);
                   for (int i = 0; i < m; ++i) {
                     for (int j = 0; j < len; ++j) {
                       an->grad[static_cast<std::size_t>(i) * n + start + j] +=
                           self.grad[static_cast<std::size_t>(i) * len + j];
                     }
                   }
                 });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto an = a.node();
  return make_op(1, 1, {s}, {an}, [an](Tensor::Node& self) {
    ensure_grad(*an);
    for (double& g : an->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(out[i], b.data()[i]);
  }
  auto an = a.node(), bn = b.node();
  return make_op(a.rows(), a.cols(), std::move(out), {an, bn},
                 [an, bn](Tensor::Node& self) {
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const bool take_a = an->value[i] <= bn->value[i];
                     if (take_a && an->requires_grad) {
                       ensure_grad(*an);
                       an->grad[i] += self.grad[i];
                     } else if (!take_a && bn->requires_grad) {
                       ensure_grad(*bn);
                       bn->grad[i] += self.grad[i];
                     }
                   }
                 });
}

Tensor clamp_t(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& x : out) x = std::clamp(x, lo, hi);
  auto an = a.node();
  return make_op(a.rows(), a.cols(), std::move(out), {an},
                 [an, lo, hi](Tensor::Node& self) {
                   ensure_grad(*an);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     if (an->value[i] > lo && an->value[i] < hi) {
                       an->grad[i] += self.grad[i];
                     }
                   }
                 });
}

Tensor pick(const Tensor& a, int r, int c) {
  if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
    throw ShapeError("pick: index (" + std::to_string(r) + ", " +
                     std::to_string(c) + ") outside " +
                     shape_str(a.rows(), a.cols()));
  }
  auto an = a.node();
  const std::size_t idx = static_cast<std::size_t>(r) * a.cols() + c;
  return make_op(1, 1, {a.data()[idx]}, {an}, [an, idx](Tensor::Node& self) {
    ensure_grad(*an);
    an->grad[idx] += self.grad[0];
  });
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw GraphError("backward: loss must be scalar");
  auto root = loss.node();
  if (root->consumed) {
    throw GraphError("backward: graph already consumed; rebuild the forward "
                     "pass before calling backward again");
  }
  if (!root->requires_grad) {
    root->consumed = true;
    return;  // constant loss: nothing to do
  }

  // Iterative DFS topological order.
  std::vector<Tensor::Node*> order;
  std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
  std::vector<Tensor::Node*> seen;
  auto mark = [&](Tensor::Node* n) {
    // consumed doubles as the visitation mark for this pass
    if (n->consumed) return false;
    n->consumed = true;
    seen.push_back(n);
    return true;
  };
  if (mark(root.get())) stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Tensor::Node* p = n->parents[i].get();
      ++i;
      if (p->requires_grad && mark(p)) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Tensor::Node* n : seen) ensure_grad(*n);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

void Adam::step(std::vector<Parameter>& params) {
  if (slots_.size() != params.size()) {
    slots_.clear();
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t n = params[i].tensor.data().size();
      slots_[i].m.assign(n, 0.0);
      slots_[i].v.assign(n, 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto node = p.tensor.node();
    if (node->grad.size() != node->value.size()) {
      ensure_grad(*node);
    }
    auto& slot = slots_[i];
    for (std::size_t j = 0; j < node->value.size(); ++j) {
      const double g = node->grad[j];
      if (!std::isfinite(g)) {
        throw std::runtime_error("optimizer: non-finite gradient in parameter " +
                                 p.name);
      }
      slot.m[j] = cfg_.beta1 * slot.m[j] + (1.0 - cfg_.beta1) * g;
      slot.v[j] = cfg_.beta2 * slot.v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = slot.m[j] / bc1;
      const double vhat = slot.v[j] / bc2;
      node->value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

Tensor init_uniform_fan_in(int rows, int cols, int fan_in,
                           std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& x : data) x = u(rng);
  return Tensor(rows, cols, std::move(data), true);
}

}  // namespace sleepcc
