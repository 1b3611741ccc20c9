#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dfn/errors.hpp"

namespace dfn {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shape_eq(const Shape& a, const Shape& b);

namespace detail {

// Recycles tensor buffers between graph builds. Training loops allocate and
// free the same activation shapes every step; reusing warm pages avoids the
// malloc + page-fault + zero-fill cost that otherwise dominates small models.
template <typename S>
class BufferPool {
 public:
  static BufferPool& instance() {
    // Leaked on purpose: tensors with static storage may die after a
    // non-leaked pool would, and the process reclaims it anyway.
    static thread_local BufferPool* pool = new BufferPool();
    return *pool;
  }

  // Returns a vector of exactly n elements with unspecified contents.
  std::vector<S> take(std::size_t n) {
    auto it = bins_.find(n);
    if (it != bins_.end() && !it->second.empty()) {
      std::vector<S> buf = std::move(it->second.back());
      it->second.pop_back();
      held_bytes_ -= n * sizeof(S);
      return buf;
    }
    return std::vector<S>(n);
  }

  void give(std::vector<S>&& buf) {
    const std::size_t n = buf.size();
    if (n < kMinElems || n != buf.capacity()) return;
    if (held_bytes_ + n * sizeof(S) > kMaxBytes) return;
    held_bytes_ += n * sizeof(S);
    bins_[n].push_back(std::move(buf));
  }

 private:
  static constexpr std::size_t kMinElems = 1024;
  static constexpr std::size_t kMaxBytes = std::size_t(384) << 20;
  std::size_t held_bytes_ = 0;
  std::unordered_map<std::size_t, std::vector<std::vector<S>>> bins_;
};

}  // namespace detail

// Dense row-major tensor holding values and, once backward() has run,
// gradients. Ops link result tensors to their inputs through `parents` and
// `backward_op`; the graph is a DAG of shared_ptrs that dies with the last
// handle to its root.
template <typename S>
struct TensorT : std::enable_shared_from_this<TensorT<S>> {
  using Scalar = S;
  using Ptr = std::shared_ptr<TensorT<S>>;

  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until ensure_grad()
  bool requires_grad = false;

  std::vector<Ptr> parents;
  // Accumulates this node's grad into its parents' grads. Set only while
  // grad recording is enabled and some parent requires grad.
  std::function<void(TensorT<S>&)> backward_op;

  ~TensorT() {
    auto& pool = detail::BufferPool<S>::instance();
    pool.give(std::move(data));
    pool.give(std::move(grad));
  }

  std::int64_t numel() const { return shape_numel(shape); }

  void ensure_grad() {
    if (grad.size() != data.size()) {
      grad = detail::BufferPool<S>::instance().take(data.size());
      std::fill(grad.begin(), grad.end(), S(0));
    }
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }

  S& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  S at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  // Drops autograd wiring so a tensor can outlive the graph that made it.
  void detach() {
    parents.clear();
    backward_op = nullptr;
  }
};

template <typename S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;

template <typename S>
TensorPtrT<S> make_tensor(Shape shape, bool requires_grad = false) {
  auto t = std::make_shared<TensorT<S>>();
  const std::int64_t n = shape_numel(shape);
  t->shape = std::move(shape);
  t->data = detail::BufferPool<S>::instance().take(static_cast<std::size_t>(n));
  std::fill(t->data.begin(), t->data.end(), S(0));
  t->requires_grad = requires_grad;
  return t;
}

// Like make_tensor but the values start unspecified. Only for op outputs
// whose every element is written before the tensor escapes.
template <typename S>
TensorPtrT<S> make_tensor_uninit(Shape shape, bool requires_grad = false) {
  auto t = std::make_shared<TensorT<S>>();
  const std::int64_t n = shape_numel(shape);
  t->shape = std::move(shape);
  t->data = detail::BufferPool<S>::instance().take(static_cast<std::size_t>(n));
  t->requires_grad = requires_grad;
  return t;
}

template <typename S>
TensorPtrT<S> full_tensor(Shape shape, S value, bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

template <typename S>
TensorPtrT<S> tensor_from(Shape shape, std::vector<S> values,
                          bool requires_grad = false) {
  const std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size()))
    throw ShapeError("tensor_from: " + shape_str(shape) + " needs " +
                     std::to_string(n) + " values, got " +
                     std::to_string(values.size()));
  auto t = std::make_shared<TensorT<S>>();
  t->shape = std::move(shape);
  t->data = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

// Copies values (not wiring) into a tensor of another scalar type.
template <typename D, typename S>
TensorPtrT<D> cast_tensor(const TensorPtrT<S>& src) {
  auto out = make_tensor<D>(src->shape, src->requires_grad);
  for (std::size_t i = 0; i < src->data.size(); ++i)
    out->data[i] = static_cast<D>(src->data[i]);
  return out;
}

}  // namespace dfn
