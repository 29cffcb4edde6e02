#include "hatsc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hatsc/errors.hpp"

namespace hatsc {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

template <class R>
TensorT<R>::TensorT(Shape shape, std::vector<R> values) : st_(std::make_shared<Storage>()) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw UsageError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                     shape_str(shape));
  }
  st_->shape = std::move(shape);
  st_->data = std::move(values);
}

template <class R>
R TensorT<R>::item() const {
  if (size() != 1) {
    throw UsageError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  }
  return st_->data[0];
}

template <class R>
std::vector<R>& TensorT<R>::grad_values() {
  if (st_->grad.empty()) st_->grad.assign(st_->data.size(), R(0));
  return st_->grad;
}

template <class R>
void TensorT<R>::accumulate_grad(const R* g, int64_t n) {
  std::vector<R>& dst = grad_values();
  for (int64_t i = 0; i < n; ++i) dst[static_cast<size_t>(i)] += g[i];
}

template <class R>
void TensorT<R>::zero_grad() {
  std::fill(st_->grad.begin(), st_->grad.end(), R(0));
}

template <class R>
bool TensorT<R>::all_finite() const {
  for (R v : st_->data) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

namespace {
thread_local bool g_autograd_enabled = true;
}

bool autograd_enabled() { return g_autograd_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_autograd_enabled) { g_autograd_enabled = false; }
NoGradGuard::~NoGradGuard() { g_autograd_enabled = prev_; }

template <class R>
void backward(const TensorT<R>& loss) {
  if (loss.size() != 1) {
    throw UsageError("backward: root must be scalar, got shape " + shape_str(loss.shape()));
  }

  // Iterative post-order DFS over storages that carry a tape node.
  std::vector<TensorT<R>> order;
  std::unordered_set<const void*> visited;
  struct Frame {
    TensorT<R> t;
    size_t next_input;
  };
  std::vector<Frame> stack;
  if (loss.node()) {
    stack.push_back({loss, 0});
    visited.insert(loss.storage_id());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    auto node = f.t.node();
    if (f.next_input < node->inputs.size()) {
      TensorT<R> in = node->inputs[f.next_input++];
      if (in.node() && !visited.count(in.storage_id())) {
        visited.insert(in.storage_id());
        stack.push_back({in, 0});
      }
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  // Intermediate gradients are per-sweep scratch; leaf gradients persist so
  // repeated sweeps accumulate.
  for (TensorT<R>& t : order) t.zero_grad();

  TensorT<R> root = loss;
  root.grad_values()[0] += R(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto node = it->node();
    if (node->backward && it->has_grad()) node->backward(*it);
  }
}

template class TensorT<float>;
template class TensorT<double>;
template void backward<float>(const TensorT<float>&);
template void backward<double>(const TensorT<double>&);

}  // namespace hatsc
