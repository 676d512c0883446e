#pragma once

#include <functional>
#include <map>
#include <string>

#include "ad/param_vector.hpp"
#include "ad/tape.hpp"

namespace naf::ad {

// Registers every segment of a ParamVector as a tape param node and collects
// the flat gradient back out after backward().  An optional second vector is
// bound as plain inputs: its segments are visible by name but excluded from
// the gradient.
template <typename T>
class ParamNodes {
 public:
  ParamNodes(Tape<T>& tape, const ParamVectorT<T>& pv,
             const ParamVectorT<T>* frozen = nullptr,
             const ParamVectorT<T>* frozen2 = nullptr)
      : tape_(&tape), pv_(&pv) {
    for (const auto& seg : pv.segments) {
      ids_.push_back(tape.param(seg.value));
      by_name_[seg.name] = ids_.back();
    }
    for (const auto* fz : {frozen, frozen2})
      if (fz)
        for (const auto& seg : fz->segments) {
          require(!by_name_.count(seg.name), Errc::invalid_argument,
                  "parameter bound both tracked and frozen: " + seg.name);
          by_name_[seg.name] = tape.input(seg.value);
        }
  }

  typename Tape<T>::Id operator()(const std::string& name) const {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), Errc::not_found, "no parameter node " + name);
    return it->second;
  }

  VecX<T> collect_grad() const {
    VecX<T> out(pv_->total_size());
    int64_t off = 0;
    for (size_t i = 0; i < ids_.size(); ++i) {
      const auto& nd = tape_->node(ids_[i]);
      int64_t n = nd.val.size();
      if (nd.grad.size() == 0)
        out.segment(off, n).setZero();
      else
        out.segment(off, n) = Eigen::Map<const VecX<T>>(nd.grad.data(), n);
      off += n;
    }
    return out;
  }

 private:
  Tape<T>* tape_;
  const ParamVectorT<T>* pv_;
  std::vector<typename Tape<T>::Id> ids_;
  std::map<std::string, typename Tape<T>::Id> by_name_;
};

template <typename T>
struct EvalResult {
  T value;
  VecX<T> grad;  // flat, ParamVector segment order
};

// Builds the program on a fresh tape, verifies every intermediate is finite,
// then runs one reverse sweep.
template <typename T>
EvalResult<T> evaluate_with_gradients(
    const ParamVectorT<T>& params,
    const std::function<typename Tape<T>::Id(Tape<T>&, const ParamNodes<T>&)>&
        program,
    const ParamVectorT<T>* frozen = nullptr) {
  Tape<T> tape;
  ParamNodes<T> nodes(tape, params, frozen);
  auto root = program(tape, nodes);
  auto bad = tape.first_nonfinite();
  if (bad >= 0)
    raise(Errc::numeric_error,
          std::string("non-finite value produced by primitive '") +
              op_name(tape.node(bad).op) + "'");
  tape.backward(root);
  return {tape.scalar(root), nodes.collect_grad()};
}

}  // namespace naf::ad
