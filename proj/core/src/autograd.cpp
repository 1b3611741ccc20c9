#include "dfn/autograd.hpp"

#include <unordered_set>
#include <vector>

namespace dfn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

template <typename S>
void backward(const TensorPtrT<S>& loss) {
  if (!loss) throw StateError("backward: null tensor");
  if (loss->numel() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(loss->shape));

  // iterative topo sort; the graph is deep enough (hundreds of conv layers
  // unrolled over patches) that recursion would risk the stack
  std::vector<TensorT<S>*> order;
  std::unordered_set<TensorT<S>*> visited;
  struct Frame {
    TensorT<S>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.get(), 0});
  visited.insert(loss.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorT<S>* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorT<S>* node = *it;
    if (node->backward_op && !node->grad.empty()) node->backward_op(*node);
  }
}

template void backward<float>(const TensorPtrT<float>&);
template void backward<double>(const TensorPtrT<double>&);

}  // namespace dfn
