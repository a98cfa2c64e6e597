#include "cprel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "cprel/error.hpp"

namespace cprel {

namespace {

thread_local int g_no_grad_depth = 0;

std::size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor: non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": rank-2 tensor required");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

// Output tensor for an op: traced iff recording is on and a parent needs grad.
Tensor op_output(std::vector<int> shape, std::initializer_list<Tensor> parents) {
  bool rg = false;
  if (g_no_grad_depth == 0) {
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros(std::move(shape), rg);
  if (rg) {
    auto node = std::make_shared<TapeNode>();
    for (const Tensor& p : parents) node->parents.push_back(p.impl());
    out.impl()->node = std::move(node);
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  const std::size_t n = checked_numel(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values.assign(n, 0.0);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(n, 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values,
                    bool requires_grad) {
  const std::size_t n = checked_numel(shape);
  if (values.size() != n) {
    throw ShapeError("tensor: values length does not match shape");
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.impl_->values = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1, 1}, {v}, requires_grad);
}

int Tensor::rows() const {
  require_rank2(*this, "rows");
  return impl_->shape[0];
}

int Tensor::cols() const {
  require_rank2(*this, "cols");
  return impl_->shape[1];
}

double Tensor::operator()(int r, int c) const {
  return impl_->values[static_cast<std::size_t>(r) * impl_->shape[1] + c];
}

double& Tensor::operator()(int r, int c) {
  return impl_->values[static_cast<std::size_t>(r) * impl_->shape[1] + c];
}

double Tensor::value() const {
  if (numel() != 1) throw ShapeError("value: tensor is not scalar");
  return impl_->values[0];
}

std::vector<double>& Tensor::grad() {
  if (!impl_->requires_grad) throw ShapeError("grad: tensor has no grad buffer");
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!impl_->requires_grad) throw ShapeError("grad: tensor has no grad buffer");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// --- kernels ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int r = a.rows(), k = a.cols(), c = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions differ");
  Tensor out = op_output({r, c}, {a, b});
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (int i = 0; i < r; ++i) {
    for (int t = 0; t < k; ++t) {
      const double av = pa[i * k + t];
      if (av == 0.0) continue;
      for (int j = 0; j < c; ++j) po[i * c + j] += av * pb[t * c + j];
    }
  }
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [r, k, c](const TensorImpl& o) {
      TensorImpl& pa2 = *o.node->parents[0];
      TensorImpl& pb2 = *o.node->parents[1];
      const double* g = o.grad.data();
      if (pa2.requires_grad) {
        double* da = pa2.grad.data();
        const double* bv = pb2.values.data();
        for (int i = 0; i < r; ++i)
          for (int t = 0; t < k; ++t) {
            double s = 0.0;
            for (int j = 0; j < c; ++j) s += g[i * c + j] * bv[t * c + j];
            da[i * k + t] += s;
          }
      }
      if (pb2.requires_grad) {
        double* db = pb2.grad.data();
        const double* av = pa2.values.data();
        for (int t = 0; t < k; ++t)
          for (int j = 0; j < c; ++j) {
            double s = 0.0;
            for (int i = 0; i < r; ++i) s += av[i * k + t] * g[i * c + j];
            db[t * c + j] += s;
          }
      }
    };
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int r = a.rows(), c = a.cols();
  Tensor out = op_output({c, r}, {a});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out(j, i) = a(i, j);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [r, c](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          p.grad[static_cast<std::size_t>(i) * c + j] +=
              o.grad[static_cast<std::size_t>(j) * r + i];
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = op_output(a.shape(), {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      for (int side = 0; side < 2; ++side) {
        TensorImpl& p = *o.node->parents[side];
        if (!p.requires_grad) continue;
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = op_output(a.shape(), {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& pa = *o.node->parents[0];
      TensorImpl& pb = *o.node->parents[1];
      if (pa.requires_grad)
        for (std::size_t i = 0; i < n; ++i) pa.grad[i] += o.grad[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < n; ++i) pb.grad[i] -= o.grad[i];
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = op_output(a.shape(), {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& pa = *o.node->parents[0];
      TensorImpl& pb = *o.node->parents[1];
      if (pa.requires_grad)
        for (std::size_t i = 0; i < n; ++i) pa.grad[i] += o.grad[i] * pb.values[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < n; ++i) pb.grad[i] += o.grad[i] * pa.values[i];
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = op_output(a.shape(), {a});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * s;
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n, s](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) p.grad[i] += s * o.grad[i];
    };
  }
  return out;
}

Tensor add_const(const Tensor& a, double s) {
  Tensor out = op_output(a.shape(), {a});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + s;
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i];
    };
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  require_rank2(a, "add_rowvec");
  require_rank2(row, "add_rowvec");
  const int r = a.rows(), c = a.cols();
  if (row.rows() != 1 || row.cols() != c) {
    throw ShapeError("add_rowvec: row vector must be 1 x cols");
  }
  Tensor out = op_output({r, c}, {a, row});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out(i, j) = a(i, j) + row(0, j);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [r, c](const TensorImpl& o) {
      TensorImpl& pa = *o.node->parents[0];
      TensorImpl& pv = *o.node->parents[1];
      if (pa.requires_grad)
        for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
      if (pv.requires_grad)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            pv.grad[j] += o.grad[static_cast<std::size_t>(i) * c + j];
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = op_output(a.shape(), {a});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = stable_sigmoid(a.values()[i]);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = o.values[i];
        p.grad[i] += o.grad[i] * y * (1.0 - y);
      }
    };
  }
  return out;
}

Tensor tanh_op(const Tensor& a) {
  Tensor out = op_output(a.shape(), {a});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = std::tanh(a.values()[i]);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = o.values[i];
        p.grad[i] += o.grad[i] * (1.0 - y * y);
      }
    };
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = op_output(a.shape(), {a});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i)
        if (p.values[i] > 0.0) p.grad[i] += o.grad[i];
    };
  }
  return out;
}

Tensor softplus(const Tensor& a) {
  Tensor out = op_output(a.shape(), {a});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.values()[i];
    out.values()[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
  }
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [n](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i)
        p.grad[i] += o.grad[i] * stable_sigmoid(p.values[i]);
    };
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int r = parts[0].rows();
  int total = 0;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parts) rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({r, total}, rg);
  if (rg) {
    auto node = std::make_shared<TapeNode>();
    for (const Tensor& p : parts) node->parents.push_back(p.impl());
    out.impl()->node = std::move(node);
  }
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < widths[k]; ++j) out(i, off + j) = parts[k](i, j);
    off += widths[k];
  }
  if (rg) {
    out.impl()->node->grad_fn = [r, total, widths](const TensorImpl& o) {
      int off2 = 0;
      for (std::size_t k = 0; k < o.node->parents.size(); ++k) {
        TensorImpl& p = *o.node->parents[k];
        const int w = widths[k];
        if (p.requires_grad) {
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
              p.grad[static_cast<std::size_t>(i) * w + j] +=
                  o.grad[static_cast<std::size_t>(i) * total + off2 + j];
        }
        off2 += w;
      }
    };
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int c = parts[0].cols();
  int total = 0;
  std::vector<int> heights;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != c) throw ShapeError("concat_rows: column count mismatch");
    heights.push_back(p.rows());
    total += p.rows();
  }
  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parts) rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total, c}, rg);
  if (rg) {
    auto node = std::make_shared<TapeNode>();
    for (const Tensor& p : parts) node->parents.push_back(p.impl());
    out.impl()->node = std::move(node);
  }
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int i = 0; i < heights[k]; ++i)
      for (int j = 0; j < c; ++j) out(off + i, j) = parts[k](i, j);
    off += heights[k];
  }
  if (rg) {
    out.impl()->node->grad_fn = [c, heights](const TensorImpl& o) {
      int off2 = 0;
      for (std::size_t k = 0; k < o.node->parents.size(); ++k) {
        TensorImpl& p = *o.node->parents[k];
        const int h = heights[k];
        if (p.requires_grad) {
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < c; ++j)
              p.grad[static_cast<std::size_t>(i) * c + j] +=
                  o.grad[static_cast<std::size_t>(off2 + i) * c + j];
        }
        off2 += h;
      }
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require_rank2(a, "slice_rows");
  if (r0 < 0 || r1 <= r0 || r1 > a.rows()) {
    throw IndexError("slice_rows: row range out of bounds");
  }
  const int c = a.cols(), h = r1 - r0;
  Tensor out = op_output({h, c}, {a});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < c; ++j) out(i, j) = a(r0 + i, j);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [r0, h, c](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < c; ++j)
          p.grad[static_cast<std::size_t>(r0 + i) * c + j] +=
              o.grad[static_cast<std::size_t>(i) * c + j];
    };
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out = op_output({1, 1}, {a});
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.values()[0] = s;
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (double& g : p.grad) g += o.grad[0];
    };
  }
  return out;
}

Tensor row_softmax(const Tensor& m) {
  if (m.shape().size() != 2) throw ShapeError("row_softmax: rank-2 tensor required");
  const int r = m.rows(), c = m.cols();
  Tensor out = op_output({r, c}, {m});
  for (int i = 0; i < r; ++i) {
    double mx = m(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, m(i, j));
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      s += e;
    }
    for (int j = 0; j < c; ++j) out(i, j) /= s;
  }
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [r, c](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (int i = 0; i < r; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += o.grad[base + j] * o.values[base + j];
        for (int j = 0; j < c; ++j)
          p.grad[base + j] += o.values[base + j] * (o.grad[base + j] - dot);
      }
    };
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, int gold) {
  require_rank2(logits, "cross_entropy");
  if (logits.rows() != 1) throw ShapeError("cross_entropy: logits must be 1 x m");
  const int m = logits.cols();
  if (gold < 0 || gold >= m) throw IndexError("cross_entropy: gold label out of range");
  double mx = logits(0, 0);
  for (int j = 1; j < m; ++j) mx = std::max(mx, logits(0, j));
  double s = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    probs[static_cast<std::size_t>(j)] = std::exp(logits(0, j) - mx);
    s += probs[static_cast<std::size_t>(j)];
  }
  for (double& pv : probs) pv /= s;
  Tensor out = op_output({1, 1}, {logits});
  out.values()[0] = std::log(s) - (logits(0, gold) - mx);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [probs, gold](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      const double g = o.grad[0];
      for (std::size_t j = 0; j < probs.size(); ++j) {
        double d = probs[j];
        if (static_cast<int>(j) == gold) d -= 1.0;
        p.grad[j] += g * d;
      }
    };
  }
  return out;
}

namespace {

Tensor pool_rows_impl(const Tensor& a, const std::vector<int>& row_ids) {
  const int c = a.cols();
  Tensor out = op_output({1, c}, {a});
  std::vector<int> arg(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) {
    int best = row_ids[0];
    double bv = a(best, j);
    for (std::size_t k = 1; k < row_ids.size(); ++k) {
      const double v = a(row_ids[k], j);
      if (v > bv) {
        bv = v;
        best = row_ids[k];
      }
    }
    out(0, j) = bv;
    arg[static_cast<std::size_t>(j)] = best;
  }
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [arg, c](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (int j = 0; j < c; ++j)
        p.grad[static_cast<std::size_t>(arg[static_cast<std::size_t>(j)]) * c + j] +=
            o.grad[static_cast<std::size_t>(j)];
    };
  }
  return out;
}

}  // namespace

Tensor max_pool_rows(const Tensor& a) {
  require_rank2(a, "max_pool_rows");
  std::vector<int> all(static_cast<std::size_t>(a.rows()));
  for (int i = 0; i < a.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
  return pool_rows_impl(a, all);
}

Tensor max_pool_rows_subset(const Tensor& a, const std::vector<int>& row_ids) {
  require_rank2(a, "max_pool_rows_subset");
  if (row_ids.empty()) throw IndexError("max_pool_rows_subset: empty row set");
  for (int r : row_ids) {
    if (r < 0 || r >= a.rows()) throw IndexError("max_pool_rows_subset: row out of range");
  }
  return pool_rows_impl(a, row_ids);
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "embedding_rows");
  const int e = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) throw IndexError("embedding_rows: id out of range");
  }
  if (ids.empty()) throw IndexError("embedding_rows: empty id list");
  const int n = static_cast<int>(ids.size());
  Tensor out = op_output({n, e}, {table});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < e; ++j) out(i, j) = table(ids[static_cast<std::size_t>(i)], j);
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [ids, e](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < e; ++j)
          p.grad[static_cast<std::size_t>(ids[i]) * e + j] += o.grad[i * e + j];
    };
  }
  return out;
}

Tensor type_score_cells(const Tensor& table, const std::vector<int>& ids, int n,
                        double mask_value) {
  require_rank2(table, "type_score_cells");
  if (table.cols() != 1) throw ShapeError("type_score_cells: table must be T x 1");
  if (static_cast<std::size_t>(n) * n != ids.size()) {
    throw ShapeError("type_score_cells: id matrix size mismatch");
  }
  const int types = table.rows();
  for (int id : ids) {
    if (id < 0 || id > types) throw VocabError("type_score_cells: unknown type id");
  }
  Tensor out = op_output({n, n}, {table});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out.values()[k] = ids[k] == 0 ? mask_value : table(ids[k] - 1, 0);
  }
  if (out.requires_grad()) {
    out.impl()->node->grad_fn = [ids](const TensorImpl& o) {
      TensorImpl& p = *o.node->parents[0];
      if (!p.requires_grad) return;
      for (std::size_t k = 0; k < ids.size(); ++k)
        if (ids[k] > 0) p.grad[static_cast<std::size_t>(ids[k] - 1)] += o.grad[k];
    };
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined tensor");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar");
  if (!loss.requires_grad()) return;  // nothing recorded

  // Post-order over the recorded graph, iterative to keep stack depth flat.
  // The order holds owning pointers: consuming a node releases its parents,
  // which may be the only other owners of intermediate tensors.
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->parents.size()) {
      const std::shared_ptr<TensorImpl>& p = t->node->parents[next];
      ++next;
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  loss.impl()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& t = **it;
    if (t.node) {
      t.node->grad_fn(t);
      t.node.reset();  // consume the tape
    }
  }
}

}  // namespace cprel
