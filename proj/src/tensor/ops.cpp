#include "xlt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace xlt::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void require_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined operand");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
std::vector<T>& grad_of(const NodePtr<T>& n) {
  n->ensure_grad();
  return n->grad;
}

std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Calls fn(out_flat_index, multi_index) for every element in row-major order.
template <typename Fn>
void for_each_index(const Shape& shape, Fn&& fn) {
  const std::int64_t n = numel(shape);
  std::vector<std::int64_t> idx(shape.size(), 0);
  for (std::int64_t flat = 0; flat < n; ++flat) {
    fn(flat, idx);
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
}

std::int64_t row_length(const Shape& shape, const char* op) {
  if (shape.empty()) throw ShapeError(std::string(op) + ": needs rank >= 1, got scalar");
  return shape.back();
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  auto pa = a.node();
  auto pb = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa, pb},
                                [pa, pb](detail::Node<T>& self) {
                                  for (const auto& p : {pa, pb}) {
                                    if (!p->requires_grad) continue;
                                    auto& g = grad_of(p);
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  auto pa = a.node();
  auto pb = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa, pb},
                                [pa, pb](detail::Node<T>& self) {
                                  if (pa->requires_grad) {
                                    auto& g = grad_of(pa);
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                  }
                                  if (pb->requires_grad) {
                                    auto& g = grad_of(pb);
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  auto pa = a.node();
  auto pb = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa, pb},
                                [pa, pb](detail::Node<T>& self) {
                                  if (pa->requires_grad) {
                                    auto& g = grad_of(pa);
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] += self.grad[i] * pb->data[i];
                                  }
                                  if (pb->requires_grad) {
                                    auto& g = grad_of(pb);
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] += self.grad[i] * pa->data[i];
                                  }
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  require_defined(a, "scale");
  auto da = a.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
  auto pa = a.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa},
                                [pa, factor](detail::Node<T>& self) {
                                  auto& g = grad_of(pa);
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    g[i] += self.grad[i] * factor;
                                });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() != sa.size() ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin()) || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::int64_t m = sa[sa.size() - 2];
  const std::int64_t k = sa.back();
  const std::int64_t n = sb.back();
  const std::int64_t batch = numel(Shape(sa.begin(), sa.end() - 2));
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);

  std::vector<T> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t i = 0; i < batch; ++i) {
    Eigen::Map<const RowMat<T>> A(a.data().data() + i * m * k, m, k);
    Eigen::Map<const RowMat<T>> B(b.data().data() + i * k * n, k, n);
    Eigen::Map<RowMat<T>> C(out.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  auto pa = a.node();
  auto pb = b.node();
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {pa, pb},
      [pa, pb, batch, m, k, n](detail::Node<T>& self) {
        for (std::int64_t i = 0; i < batch; ++i) {
          Eigen::Map<const RowMat<T>> dC(self.grad.data() + i * m * n, m, n);
          if (pa->requires_grad) {
            Eigen::Map<const RowMat<T>> B(pb->data.data() + i * k * n, k, n);
            Eigen::Map<RowMat<T>> dA(grad_of(pa).data() + i * m * k, m, k);
            dA.noalias() += dC * B.transpose();
          }
          if (pb->requires_grad) {
            Eigen::Map<const RowMat<T>> A(pa->data.data() + i * m * k, m, k);
            Eigen::Map<RowMat<T>> dB(grad_of(pb).data() + i * k * n, k, n);
            dB.noalias() += A.transpose() * dC;
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  require_defined(a, "relu");
  auto da = a.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] > T(0) ? da[i] : T(0);
  auto pa = a.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa}, [pa](detail::Node<T>& self) {
    auto& g = grad_of(pa);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pa->data[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  require_defined(a, "softmax");
  const std::int64_t n = row_length(a.shape(), "softmax");
  const std::int64_t rows = a.numel() / n;
  auto da = a.data();
  std::vector<T> out(da.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = da.data() + r * n;
    T* y = out.data() + r * n;
    const T mx = *std::max_element(x, x + n);
    T total = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::int64_t j = 0; j < n; ++j) y[j] /= total;
  }
  auto pa = a.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa},
                                [pa, rows, n](detail::Node<T>& self) {
                                  auto& g = grad_of(pa);
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                    const T* y = self.data.data() + r * n;
                                    const T* dy = self.grad.data() + r * n;
                                    T dot = 0;
                                    for (std::int64_t j = 0; j < n; ++j) dot += dy[j] * y[j];
                                    T* dx = g.data() + r * n;
                                    for (std::int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
                                  }
                                });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  require_defined(a, "log_softmax");
  const std::int64_t n = row_length(a.shape(), "log_softmax");
  const std::int64_t rows = a.numel() / n;
  auto da = a.data();
  std::vector<T> out(da.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = da.data() + r * n;
    T* y = out.data() + r * n;
    const T mx = *std::max_element(x, x + n);
    T total = 0;
    for (std::int64_t j = 0; j < n; ++j) total += std::exp(x[j] - mx);
    const T lse = mx + std::log(total);
    for (std::int64_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  auto pa = a.node();
  return detail::make_result<T>(a.shape(), std::move(out), {pa},
                                [pa, rows, n](detail::Node<T>& self) {
                                  auto& g = grad_of(pa);
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                    const T* y = self.data.data() + r * n;
                                    const T* dy = self.grad.data() + r * n;
                                    T total = 0;
                                    for (std::int64_t j = 0; j < n; ++j) total += dy[j];
                                    T* dx = g.data() + r * n;
                                    for (std::int64_t j = 0; j < n; ++j)
                                      dx[j] += dy[j] - std::exp(y[j]) * total;
                                  }
                                });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  require_defined(x, "layer_norm");
  const std::int64_t n = row_length(x.shape(), "layer_norm");
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw ShapeError("layer_norm: gain/bias must be (" + std::to_string(n) + "), got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const std::int64_t rows = x.numel() / n;
  auto dx = x.data();
  auto dg = gain.data();
  auto dbias = bias.data();
  std::vector<T> out(dx.size());
  auto xhat = std::make_shared<std::vector<T>>(dx.size());
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = dx.data() + r * n;
    T mean = 0;
    for (std::int64_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::int64_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(n);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(r)] = rs;
    for (std::int64_t j = 0; j < n; ++j) {
      const T h = (xr[j] - mean) * rs;
      (*xhat)[static_cast<std::size_t>(r * n + j)] = h;
      out[static_cast<std::size_t>(r * n + j)] = h * dg[j] + dbias[j];
    }
  }
  auto px = x.node();
  auto pg = gain.node();
  auto pb = bias.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, xhat, rstd, rows, n](detail::Node<T>& self) {
        std::vector<T> dxhat(static_cast<std::size_t>(n));
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * n;
          const T* h = xhat->data() + r * n;
          if (pg->requires_grad) {
            auto& g = grad_of(pg);
            for (std::int64_t j = 0; j < n; ++j) g[j] += dy[j] * h[j];
          }
          if (pb->requires_grad) {
            auto& g = grad_of(pb);
            for (std::int64_t j = 0; j < n; ++j) g[j] += dy[j];
          }
          if (px->requires_grad) {
            T mean_d = 0;
            T mean_dh = 0;
            for (std::int64_t j = 0; j < n; ++j) {
              dxhat[j] = dy[j] * pg->data[j];
              mean_d += dxhat[j];
              mean_dh += dxhat[j] * h[j];
            }
            mean_d /= static_cast<T>(n);
            mean_dh /= static_cast<T>(n);
            const T rs = (*rstd)[static_cast<std::size_t>(r)];
            T* g = grad_of(px).data() + r * n;
            for (std::int64_t j = 0; j < n; ++j) g[j] += rs * (dxhat[j] - mean_d - h[j] * mean_dh);
          }
        }
      });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_defined(table, "embedding");
  if (table.rank() != 2) {
    throw ShapeError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  }
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  const std::int64_t rows = table.dim(0);
  const std::int64_t d = table.dim(1);
  std::vector<std::int32_t> id_copy(ids.begin(), ids.end());
  std::vector<T> out(ids.size() * static_cast<std::size_t>(d));
  auto src = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) +
                              " out of range for table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(src.data() + ids[i] * d, d, out.data() + i * d);
  }
  auto pt = table.node();
  return detail::make_result<T>(Shape{static_cast<std::int64_t>(ids.size()), d}, std::move(out),
                                {pt}, [pt, id_copy = std::move(id_copy), d](detail::Node<T>& self) {
                                  auto& g = grad_of(pt);
                                  for (std::size_t i = 0; i < id_copy.size(); ++i) {
                                    T* dst = g.data() + id_copy[i] * d;
                                    const T* dy = self.grad.data() + i * d;
                                    for (std::int64_t j = 0; j < d; ++j) dst[j] += dy[j];
                                  }
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require_defined(a, "reshape");
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("reshape: non-positive extent in " + shape_str(shape));
  }
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto pa = a.node();
  return detail::make_result<T>(std::move(shape), std::move(out), {pa},
                                [pa](detail::Node<T>& self) {
                                  auto& g = grad_of(pa);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
  require_defined(a, "permute");
  const Shape& in = a.shape();
  std::vector<int> sorted(axes);
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expected(in.size());
  std::iota(expected.begin(), expected.end(), 0);
  if (sorted != expected) {
    throw ShapeError("permute: axes are not a permutation of the " + std::to_string(in.size()) +
                     " axes of " + shape_str(in));
  }
  Shape out_shape(in.size());
  const auto in_strides = strides_of(in);
  std::vector<std::int64_t> src_strides(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    out_shape[i] = in[static_cast<std::size_t>(axes[i])];
    src_strides[i] = in_strides[static_cast<std::size_t>(axes[i])];
  }
  // Source offset for each output element, shared by forward and backward.
  auto gather = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(a.numel()));
  for_each_index(out_shape, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
    std::int64_t off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off += idx[d] * src_strides[d];
    (*gather)[static_cast<std::size_t>(flat)] = off;
  });
  auto src = a.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[static_cast<std::size_t>((*gather)[i])];
  auto pa = a.node();
  return detail::make_result<T>(std::move(out_shape), std::move(out), {pa},
                                [pa, gather](detail::Node<T>& self) {
                                  auto& g = grad_of(pa);
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    g[static_cast<std::size_t>((*gather)[i])] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_defined(a, "transpose");
  if (a.rank() < 2) throw ShapeError("transpose: needs rank >= 2, got " + shape_str(a.shape()));
  std::vector<int> axes(static_cast<std::size_t>(a.rank()));
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts.front().shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("concat: axis out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (static_cast<int>(s.size()) != rank) {
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
    s[static_cast<std::size_t>(axis)] = first[static_cast<std::size_t>(axis)];
    if (s != first) {
      throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(p.shape()) +
                       " differ off axis " + std::to_string(axis));
    }
  }
  const std::int64_t outer = numel(Shape(first.begin(), first.begin() + axis));
  const std::int64_t inner = numel(Shape(first.begin() + axis + 1, first.end()));
  const std::int64_t out_row = out_shape[static_cast<std::size_t>(axis)] * inner;
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::int64_t> widths;
  std::vector<NodePtr<T>> nodes;
  std::int64_t col = 0;
  for (const auto& p : parts) {
    const std::int64_t w = p.dim(axis) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(p.data().data() + o * w, w, out.data() + o * out_row + col);
    col += w;
    widths.push_back(w);
    nodes.push_back(p.node());
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), nodes,
                                [nodes, widths, outer, out_row](detail::Node<T>& self) {
                                  std::int64_t c = 0;
                                  for (std::size_t i = 0; i < nodes.size(); ++i) {
                                    const std::int64_t w = widths[i];
                                    if (nodes[i]->requires_grad) {
                                      auto& g = grad_of(nodes[i]);
                                      for (std::int64_t o = 0; o < outer; ++o)
                                        for (std::int64_t j = 0; j < w; ++j)
                                          g[o * w + j] += self.grad[o * out_row + c + j];
                                    }
                                    c += w;
                                  }
                                });
}

template <typename T>
Tensor<T> tile(const Tensor<T>& a, const Shape& reps) {
  require_defined(a, "tile");
  const Shape& in = a.shape();
  if (reps.size() != in.size()) {
    throw ShapeError("tile: reps " + shape_str(reps) + " must match rank of " + shape_str(in));
  }
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (reps[i] <= 0) throw ShapeError("tile: non-positive repeat in " + shape_str(reps));
    out_shape[i] = in[i] * reps[i];
  }
  const auto in_strides = strides_of(in);
  auto gather = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(numel(out_shape)));
  for_each_index(out_shape, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
    std::int64_t off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off += (idx[d] % in[d]) * in_strides[d];
    (*gather)[static_cast<std::size_t>(flat)] = off;
  });
  auto src = a.data();
  std::vector<T> out(gather->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[static_cast<std::size_t>((*gather)[i])];
  auto pa = a.node();
  return detail::make_result<T>(std::move(out_shape), std::move(out), {pa},
                                [pa, gather](detail::Node<T>& self) {
                                  auto& g = grad_of(pa);
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    g[static_cast<std::size_t>((*gather)[i])] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  require_defined(a, "sum");
  T total = 0;
  for (T v : a.data()) total += v;
  auto pa = a.node();
  return detail::make_result<T>(Shape{}, std::vector<T>{total}, {pa}, [pa](detail::Node<T>& self) {
    auto& g = grad_of(pa);
    const T dy = self.grad[0];
    for (auto& v : g) v += dy;
  });
}

#define XLT_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> softmax(const Tensor<T>&);                                              \
  template Tensor<T> log_softmax(const Tensor<T>&);                                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                     \
  template Tensor<T> transpose(const Tensor<T>&);                                            \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                             \
  template Tensor<T> tile(const Tensor<T>&, const Shape&);                                   \
  template Tensor<T> sum(const Tensor<T>&);

XLT_INSTANTIATE_OPS(float)
XLT_INSTANTIATE_OPS(double)

#undef XLT_INSTANTIATE_OPS

}  // namespace xlt::ops
