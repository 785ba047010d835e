#pragma once

#include "tvqe/gradcheck.hpp"
#include "tvqe/image_ops.hpp"

namespace tvqe {

// Finite-difference probes covering the whole op vocabulary, one or more rows
// per op (one per differentiable input slot). Shared by the unit tests, the
// checker subcommand, and the acceptance suite.

template <class S>
struct OpCheck {
  std::string name;
  std::function<FdReport(double step)> run;
};

namespace detail {

// Weighted sum turns any op output into a scalar with generic, non-degenerate
// gradients (plain sums can hide errors behind conservation identities).
template <class S>
Tensor<S> wsum(const Tensor<S>& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<S> w = uniform<S>(y.shape(), rng, 0.25, 1.0);
  return sum(mul(y, w));
}

}  // namespace detail

template <class S>
std::vector<OpCheck<S>> op_check_suite(std::uint64_t seed = 7) {
  using T = Tensor<S>;
  std::vector<OpCheck<S>> suite;
  auto probe = [&suite, seed](std::string name, Shape xshape, double lo,
                              double hi,
                              std::function<T(const T&, Rng&)> body) {
    suite.push_back(OpCheck<S>{
        std::move(name), [=](double step) {
          Rng init(seed);
          T x = uniform<S>(xshape, init, lo, hi);
          std::function<T(const T&)> f = [&](const T& v) {
            Rng aux(seed + 1);
            return body(v, aux);
          };
          return finite_diff_check<S>(f, x, step);
        }});
  };

  probe("add", {2, 3}, -2, 2, [seed](const T& x, Rng& aux) {
    T b = uniform<S>({2, 3}, aux, -2, 2);
    return detail::wsum(add(x, b), seed + 2);
  });
  probe("add(broadcast)", {3}, -2, 2, [seed](const T& x, Rng& aux) {
    T a = uniform<S>({2, 2, 3}, aux, -2, 2);
    return detail::wsum(add(a, x), seed + 2);
  });
  probe("mul", {2, 3}, -2, 2, [seed](const T& x, Rng& aux) {
    T b = uniform<S>({2, 3}, aux, -2, 2);
    return detail::wsum(mul(x, b), seed + 2);
  });
  probe("mul(broadcast)", {2, 1, 3}, -2, 2, [seed](const T& x, Rng& aux) {
    T a = uniform<S>({2, 4, 3}, aux, -2, 2);
    return detail::wsum(mul(a, x), seed + 2);
  });
  probe("scale", {2, 3}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(scale(x, -1.7), seed + 2);
  });
  probe("add_scalar", {2, 3}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(add_scalar(x, 0.31), seed + 2);
  });
  probe("sqrt", {2, 3}, 0.5, 2.5, [seed](const T& x, Rng&) {
    return detail::wsum(tvqe::sqrt(x), seed + 2);
  });
  probe("gelu", {2, 5}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(gelu(x), seed + 2);
  });
  probe("reshape", {2, 6}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(reshape(x, {3, 4}), seed + 2);
  });
  probe("permute", {2, 3, 4}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(permute(x, {2, 0, 1}), seed + 2);
  });
  probe("slice", {2, 5, 3}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(slice(x, 1, 1, 3), seed + 2);
  });
  probe("concat", {2, 3}, -2, 2, [seed](const T& x, Rng& aux) {
    T b = uniform<S>({2, 2}, aux, -2, 2);
    return detail::wsum(concat<S>({x, b}, 1), seed + 2);
  });
  probe("index_select0", {4, 3}, -2, 2, [seed](const T& x, Rng&) {
    // repeated row exercises scatter-add accumulation
    return detail::wsum(index_select0(x, {2, 0, 2, 3}), seed + 2);
  });
  probe("sum", {3, 4}, -2, 2, [](const T& x, Rng&) { return sum(x); });
  probe("mean", {3, 4}, -2, 2, [](const T& x, Rng&) { return mean(x); });
  probe("matmul(lhs)", {2, 3, 4}, -1, 1, [seed](const T& x, Rng& aux) {
    T b = uniform<S>({2, 4, 2}, aux, -1, 1);
    return detail::wsum(matmul(x, b), seed + 2);
  });
  probe("matmul(rhs)", {4, 2}, -1, 1, [seed](const T& x, Rng& aux) {
    T a = uniform<S>({2, 3, 4}, aux, -1, 1);
    return detail::wsum(matmul(a, x), seed + 2);
  });
  probe("matmul(batch-broadcast)", {1, 3, 3}, -1, 1,
        [seed](const T& x, Rng& aux) {
          T a = uniform<S>({4, 2, 3}, aux, -1, 1);
          return detail::wsum(matmul(a, x), seed + 2);
        });
  probe("softmax", {2, 4}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(softmax(x, 1), seed + 2);
  });
  probe("softmax(axis0)", {3, 4}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(softmax(x, 0), seed + 2);
  });
  probe("layer_norm", {3, 6}, -2, 2, [seed](const T& x, Rng& aux) {
    T g = uniform<S>({6}, aux, 0.5, 1.5);
    T b = uniform<S>({6}, aux, -0.5, 0.5);
    return detail::wsum(layer_norm(x, g, b), seed + 2);
  });
  probe("layer_norm(gamma)", {6}, 0.5, 1.5, [seed](const T& x, Rng& aux) {
    T v = uniform<S>({3, 6}, aux, -2, 2);
    T b = uniform<S>({6}, aux, -0.5, 0.5);
    return detail::wsum(layer_norm(v, x, b), seed + 2);
  });
  probe("layer_norm(beta)", {6}, -0.5, 0.5, [seed](const T& x, Rng& aux) {
    T v = uniform<S>({3, 6}, aux, -2, 2);
    T g = uniform<S>({6}, aux, 0.5, 1.5);
    return detail::wsum(layer_norm(v, g, x), seed + 2);
  });
  probe("conv2d(input)", {1, 2, 5, 5}, -1, 1, [seed](const T& x, Rng& aux) {
    T w = uniform<S>({3, 2, 3, 3}, aux, -1, 1);
    T b = uniform<S>({3}, aux, -1, 1);
    return detail::wsum(conv2d(x, w, b, 1, 1, 1), seed + 2);
  });
  probe("conv2d(weight)", {3, 2, 3, 3}, -1, 1, [seed](const T& x, Rng& aux) {
    T v = uniform<S>({1, 2, 5, 5}, aux, -1, 1);
    T b = uniform<S>({3}, aux, -1, 1);
    return detail::wsum(conv2d(v, x, b, 1, 1, 1), seed + 2);
  });
  probe("conv2d(bias)", {3}, -1, 1, [seed](const T& x, Rng& aux) {
    T v = uniform<S>({1, 2, 5, 5}, aux, -1, 1);
    T w = uniform<S>({3, 2, 3, 3}, aux, -1, 1);
    return detail::wsum(conv2d(v, w, x, 1, 1, 1), seed + 2);
  });
  probe("conv2d(depthwise)", {1, 4, 5, 5}, -1, 1, [seed](const T& x, Rng& aux) {
    T w = uniform<S>({4, 1, 3, 3}, aux, -1, 1);
    T b = uniform<S>({4}, aux, -1, 1);
    return detail::wsum(conv2d(x, w, b, 1, 1, 4), seed + 2);
  });
  probe("conv2d(strided)", {1, 2, 6, 6}, -1, 1, [seed](const T& x, Rng& aux) {
    T w = uniform<S>({3, 2, 2, 2}, aux, -1, 1);
    T b = uniform<S>({3}, aux, -1, 1);
    return detail::wsum(conv2d(x, w, b, 2, 0, 1), seed + 2);
  });
  probe("pixel_shuffle", {1, 8, 3, 3}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(pixel_shuffle(x, 2), seed + 2);
  });
  probe("pixel_unshuffle", {1, 2, 6, 6}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(pixel_unshuffle(x, 2), seed + 2);
  });
  probe("reflect_pad2d", {1, 2, 4, 5}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(reflect_pad2d(x, 2, 3, 1, 2), seed + 2);
  });
  probe("reflect_pad2d(pad>extent)", {1, 1, 3, 3}, -2, 2,
        [seed](const T& x, Rng&) {
          return detail::wsum(reflect_pad2d(x, 4, 5, 4, 5), seed + 2);
        });
  probe("roll2d", {2, 3, 4, 2}, -2, 2, [seed](const T& x, Rng&) {
    return detail::wsum(roll2d(x, -1, 2), seed + 2);
  });
  return suite;
}

}  // namespace tvqe
