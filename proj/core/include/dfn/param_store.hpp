#pragma once

#include <map>
#include <string>

#include "dfn/tensor.hpp"

namespace dfn {

// Flat, name-keyed registry of learnable parameters and non-learnable buffers
// (batch-norm running statistics). Names are path-like ("net1/block1/layer2/
// bn/gamma"); the weight-decay rule and the checkpoint format both key off
// them, so they are part of the model contract.
template <typename S>
class ParamStoreT {
 public:
  using Map = std::map<std::string, TensorPtrT<S>>;

  TensorPtrT<S> add_param(const std::string& name, TensorPtrT<S> t);
  TensorPtrT<S> add_buffer(const std::string& name, TensorPtrT<S> t);

  TensorPtrT<S> param(const std::string& name) const;    // throws StateError
  TensorPtrT<S> buffer(const std::string& name) const;   // throws StateError
  bool has_param(const std::string& name) const { return params_.count(name) != 0; }

  const Map& params() const { return params_; }
  const Map& buffers() const { return buffers_; }

  std::int64_t parameter_count() const;

  // Allocates and clears every parameter's gradient buffer.
  void zero_grad();

 private:
  Map params_;
  Map buffers_;
};

using ParamStore = ParamStoreT<float>;

extern template class ParamStoreT<float>;
extern template class ParamStoreT<double>;

}  // namespace dfn
