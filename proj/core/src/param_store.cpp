#include "dfn/param_store.hpp"

namespace dfn {

template <typename S>
TensorPtrT<S> ParamStoreT<S>::add_param(const std::string& name, TensorPtrT<S> t) {
  if (!t) throw StateError("add_param: null tensor for " + name);
  if (params_.count(name) || buffers_.count(name))
    throw StateError("add_param: duplicate name " + name);
  t->requires_grad = true;
  params_[name] = t;
  return t;
}

template <typename S>
TensorPtrT<S> ParamStoreT<S>::add_buffer(const std::string& name, TensorPtrT<S> t) {
  if (!t) throw StateError("add_buffer: null tensor for " + name);
  if (params_.count(name) || buffers_.count(name))
    throw StateError("add_buffer: duplicate name " + name);
  t->requires_grad = false;
  buffers_[name] = t;
  return t;
}

template <typename S>
TensorPtrT<S> ParamStoreT<S>::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

template <typename S>
TensorPtrT<S> ParamStoreT<S>::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw StateError("unknown buffer: " + name);
  return it->second;
}

template <typename S>
std::int64_t ParamStoreT<S>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t->numel();
  return n;
}

template <typename S>
void ParamStoreT<S>::zero_grad() {
  for (auto& [name, t] : params_) {
    t->ensure_grad();
    t->zero_grad();
  }
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;

}  // namespace dfn
