#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace naf::ad {

// Ordered, named parameter segments. Flat layout = segments in insertion
// order, column-major within each segment.
template <typename T>
struct ParamVectorT {
  struct Segment {
    std::string name;
    MatX<T> value;
  };

  std::vector<Segment> segments;

  int add(const std::string& name, MatX<T> value) {
    require(index_.find(name) == index_.end(), Errc::invalid_argument,
            "duplicate parameter segment " + name);
    index_[name] = (int)segments.size();
    segments.push_back({name, std::move(value)});
    return (int)segments.size() - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  MatX<T>& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), Errc::not_found, "no parameter segment " + name);
    return segments[it->second].value;
  }

  const MatX<T>& at(const std::string& name) const {
    return const_cast<ParamVectorT*>(this)->at(name);
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& s : segments) n += s.value.size();
    return n;
  }

  VecX<T> flatten() const {
    VecX<T> out(total_size());
    int64_t off = 0;
    for (const auto& s : segments) {
      out.segment(off, s.value.size()) =
          Eigen::Map<const VecX<T>>(s.value.data(), s.value.size());
      off += s.value.size();
    }
    return out;
  }

  void unflatten(const VecX<T>& flat) {
    require(flat.size() == total_size(), Errc::invalid_argument,
            "parameter vector size mismatch");
    int64_t off = 0;
    for (auto& s : segments) {
      Eigen::Map<VecX<T>>(s.value.data(), s.value.size()) =
          flat.segment(off, s.value.size());
      off += s.value.size();
    }
  }

  template <typename U>
  ParamVectorT<U> cast() const {
    ParamVectorT<U> out;
    for (const auto& s : segments) out.add(s.name, s.value.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, int> index_;
};

using ParamVector = ParamVectorT<float>;

template <typename T>
const ParamVectorT<T>& empty_params() {
  static const ParamVectorT<T> pv;
  return pv;
}

}  // namespace naf::ad
