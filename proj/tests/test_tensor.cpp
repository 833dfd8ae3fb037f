#include "doctest.h"
#include "xmlp/tensor.hpp"

using namespace xmlp;

TEST_CASE("tensor4 layout and invariants") {
  Tensor4 t(2, 3, 4, 5);
  CHECK(t.numel() == 2u * 3 * 4 * 5);
  CHECK(t.data.size() == t.numel());

  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t.data[t.numel() - 1] == 7.0f);  // (N,C,H,W) row-major, W fastest

  t.at(0, 0, 0, 1) = 3.0f;
  CHECK(t.data[1] == 3.0f);

  CHECK_THROWS_AS(Tensor4(0, 1, 1, 1), shape_error);
  CHECK_THROWS_AS(Tensor4(1, 1, -2, 1), shape_error);
}

TEST_CASE("dense weight grad shape and zero_grad") {
  DenseWeight w(3, 4);
  CHECK(w.grad.size() == w.values.size());
  for (auto& g : w.grad) g = 2.5f;
  w.zero_grad();
  for (float g : w.grad) CHECK(g == 0.0f);
}
