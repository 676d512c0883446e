#pragma once

#include "core/common.hpp"

namespace naf::testing {

template <typename T = double>
MatX<T> randn(Rng& rng, int r, int c, double scale = 1.0) {
  MatX<T> m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = (T)(normal(rng, 0.0, scale));
  return m;
}

template <typename T = double>
MatX<T> randu(Rng& rng, int r, int c, double lo, double hi) {
  MatX<T> m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = (T)(uniform(rng, lo, hi));
  return m;
}

}  // namespace naf::testing
