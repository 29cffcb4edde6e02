#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hatsc {

// Dimension sizes, outermost first. Rank 0 is a scalar (one element).
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class R>
class TensorT;

// One recorded operation on the tape: the input handles plus the rule that
// routes the output gradient back into them. Inputs are stored here so the
// backward pass can walk the graph in topological order.
template <class R>
struct TapeNodeT {
  const char* op = "";
  std::vector<TensorT<R>> inputs;
  std::function<void(const TensorT<R>& out)> backward;
};

// Dense row-major tensor. A TensorT is a cheap handle: copies share one
// storage block, and ops never mutate their inputs. The gradient buffer is
// allocated on first accumulation and shared by every handle to the storage.
template <class R>
class TensorT {
 public:
  using value_type = R;

  TensorT() : st_(std::make_shared<Storage>()) {}

  explicit TensorT(Shape shape, R fill = R(0)) : st_(std::make_shared<Storage>()) {
    st_->shape = std::move(shape);
    st_->data.assign(static_cast<size_t>(shape_numel(st_->shape)), fill);
  }

  TensorT(Shape shape, std::vector<R> values);

  static TensorT scalar(R v) {
    TensorT t;
    t.st_->data.assign(1, v);
    return t;
  }

  const Shape& shape() const { return st_->shape; }
  int rank() const { return static_cast<int>(st_->shape.size()); }
  int dim(int axis) const { return st_->shape[static_cast<size_t>(axis)]; }
  int64_t size() const { return static_cast<int64_t>(st_->data.size()); }

  R* data() { return st_->data.data(); }
  const R* data() const { return st_->data.data(); }
  std::vector<R>& values() { return st_->data; }
  const std::vector<R>& values() const { return st_->data; }

  R item() const;  // value of a one-element tensor

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool v) { st_->requires_grad = v; }

  bool has_grad() const { return !st_->grad.empty(); }
  R* grad() { return st_->grad.data(); }
  const R* grad() const { return st_->grad.data(); }
  std::vector<R>& grad_values();          // allocates zeros on first use
  void accumulate_grad(const R* g, int64_t n);
  void zero_grad();

  // True for tensors that were not produced by a recorded op.
  bool is_leaf() const { return st_->node == nullptr; }

  std::shared_ptr<TapeNodeT<R>> node() const { return st_->node; }
  void set_node(std::shared_ptr<TapeNodeT<R>> n) { st_->node = std::move(n); }

  // Identity of the underlying storage; used to deduplicate graph visits.
  const void* storage_id() const { return st_.get(); }

  bool all_finite() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<R> data;
    std::vector<R> grad;
    bool requires_grad = false;
    std::shared_ptr<TapeNodeT<R>> node;
  };

  std::shared_ptr<Storage> st_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Reverse-mode sweep from a scalar root. Visits every recorded op exactly
// once in reverse topological order. Gradients of leaf tensors accumulate
// across calls; gradients of intermediate results are reset per sweep.
template <class R>
void backward(const TensorT<R>& loss);

// Autograd recording switch for the current thread. Forward-only code
// (decoding, evaluation) runs under NoGradGuard to skip tape construction.
bool autograd_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace hatsc
