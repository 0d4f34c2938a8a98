#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xlt/tensor.hpp"

// Differentiable ops. None of them broadcast: operands must agree exactly,
// use reshape/tile to make shapes conform.
namespace xlt::ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

/// (..., m, k) x (..., k, n) -> (..., m, n); leading dims must match.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> softmax(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& a);

/// Normalizes over the last axis with the population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

/// Rows of `table` (V, D) selected by `ids`; result is (ids.size(), D).
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes);
/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
/// Repeats `a` reps[i] times along axis i (numpy tile with equal rank).
template <typename T> Tensor<T> tile(const Tensor<T>& a, const Shape& reps);
/// Sum of all elements as a rank-0 tensor.
template <typename T> Tensor<T> sum(const Tensor<T>& a);

}  // namespace xlt::ops
