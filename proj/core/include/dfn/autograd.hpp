#pragma once

#include "dfn/tensor.hpp"

namespace dfn {

// Thread-local grad-recording switch. Ops consult this when deciding whether
// to wire backward closures; NoGradGuard turns it off for a scope (inference,
// metric computation inside the train loop).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode sweep from a scalar tensor. Seeds d(loss)/d(loss) = 1, walks
// the graph in reverse topological order, and accumulates (never overwrites)
// gradients, so shared subgraphs sum their contributions. Throws ShapeError
// if `loss` is not a single element.
template <typename S>
void backward(const TensorPtrT<S>& loss);

}  // namespace dfn
