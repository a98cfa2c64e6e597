#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace cprel {

struct TensorImpl;

// One recorded op: how to push the output gradient into the parents.
struct TapeNode {
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(const TensorImpl& out)> grad_fn;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // sized like values iff requires_grad
  std::shared_ptr<TapeNode> node;
};

// Dense row-major tensor of doubles with reverse-mode differentiation.
// Value semantics over a shared impl: copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->values.size(); }
  int rows() const;  // rank-2 only
  int cols() const;

  double operator()(int r, int c) const;
  double& operator()(int r, int c);
  double value() const;  // single-element tensors

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }
  bool requires_grad() const { return impl_->requires_grad; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// While alive on a thread, ops do not record tape nodes and outputs do not
// require grad. Nestable.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// --- kernels ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_const(const Tensor& a, double s);
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // broadcast 1 x c
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, int r0, int r1);  // [r0, r1)
Tensor sum_all(const Tensor& a);                     // 1 x 1

// Per-row stabilized softmax (max subtraction). Rank-2 input required.
Tensor row_softmax(const Tensor& m);

// loss = -log softmax(logits)[gold]; logits is 1 x m, result 1 x 1.
Tensor cross_entropy(const Tensor& logits, int gold);

// Column-wise max over all rows (or a row subset); ties go to the lowest
// row index and the backward pass routes gradient there.
Tensor max_pool_rows(const Tensor& a);
Tensor max_pool_rows_subset(const Tensor& a, const std::vector<int>& row_ids);

// Row gather from an embedding table; backward scatter-adds.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// score_cells(i,j) = table(ids(i,j)-1, 0) for ids > 0, mask_value for 0.
// ids beyond the table rows raise VocabError.
Tensor type_score_cells(const Tensor& table, const std::vector<int>& ids,
                        int n, double mask_value);

// Fills grad buffers of everything the scalar loss was computed from.
// Gradients accumulate across calls; the recorded graph is released.
void backward(const Tensor& loss);

}  // namespace cprel
