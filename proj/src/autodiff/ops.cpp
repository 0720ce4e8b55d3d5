// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bliss/errors.hpp"
#include "bliss/simd/kernels.hpp"

namespace bliss::ad {
namespace {

const simd::KernelTable& K() { return simd::active_kernels(); }

std::string dims(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same(const Var& a, const Var& b, const char* op) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes " + dims(x) + " and " + dims(y) + " differ");
  }
}

Tensor like(const Tensor& t) { return Tensor::matrix(t.rows(), t.cols()); }

Tensor transposed(const Tensor& t) {
  const std::size_t r = t.rows();
  const std::size_t c = t.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = t[i * c + j];
  }
  return out;
}

Tensor gemm(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  K().gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  return c;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = like(a.value());
  K().add(out.size(), a.value().data(), b.value().data(), out.data());
  return a.tape().record(std::move(out), {a, b},
                         [](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = g;
                           if (needs[1]) grads[1] = g;
                         },
                         "add");
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = like(a.value());
  K().sub(out.size(), a.value().data(), b.value().data(), out.data());
  return a.tape().record(std::move(out), {a, b},
                         [](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = g;
                           if (needs[1]) grads[1] = scale(g, -1.0);
                         },
                         "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = like(a.value());
  K().mul(out.size(), a.value().data(), b.value().data(), out.data());
  return a.tape().record(std::move(out), {a, b},
                         [a, b](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = mul(g, b);
                           if (needs[1]) grads[1] = mul(g, a);
                         },
                         "mul");
}

Var scale(const Var& a, double alpha) {
  Tensor out = like(a.value());
  K().scale(out.size(), alpha, a.value().data(), out.data());
  return a.tape().record(std::move(out), {a},
                         [alpha](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = scale(g, alpha);
                         },
                         "scale");
}

Var add_scalar(const Var& a, double c) {
  Tensor out = like(a.value());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
  return a.tape().record(std::move(out), {a},
                         [](const Var&, const Var& g, auto, auto grads) { grads[0] = g; },
                         "add_scalar");
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  const std::vector<std::size_t> original = a.value().shape();
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a},
                         [original](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = reshape(g, original);
                         },
                         "reshape");
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + dims(a.value()) + " * " + dims(b.value()));
  }
  return a.tape().record(gemm(a.value(), b.value()), {a, b},
                         [a, b](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = matmul_nt(g, b);
                           if (needs[1]) grads[1] = matmul_tn(a, g);
                         },
                         "matmul");
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + dims(a.value()) + " * (" + dims(b.value()) + ")^T");
  }
  return a.tape().record(gemm(a.value(), transposed(b.value())), {a, b},
                         [a, b](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = matmul(g, b);
                           if (needs[1]) grads[1] = matmul_tn(g, a);
                         },
                         "matmul_nt");
}

Var matmul_tn(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: (" + dims(a.value()) + ")^T * " + dims(b.value()));
  }
  return a.tape().record(gemm(transposed(a.value()), b.value()), {a, b},
                         [a, b](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = matmul_nt(b, g);
                           if (needs[1]) grads[1] = matmul(a, g);
                         },
                         "matmul_tn");
}

Var group_matmul(const Var& a, const Var& b, std::size_t groups, bool trans_a, bool trans_b) {
  if (groups == 0 || a.rows() % groups != 0 || b.rows() % groups != 0) {
    throw ShapeError("group_matmul: row counts " + dims(a.value()) + ", " + dims(b.value()) +
                     " do not split into " + std::to_string(groups) + " groups");
  }
  const std::size_t ar = a.rows() / groups, ac = a.cols();
  const std::size_t br = b.rows() / groups, bc = b.cols();
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t k = trans_a ? ar : ac;
  const std::size_t n = trans_b ? br : bc;
  if ((trans_b ? bc : br) != k) {
    throw ShapeError("group_matmul: inner dimensions differ for " + dims(a.value()) + ", " + dims(b.value()));
  }
  Tensor out = Tensor::matrix(groups * m, n);
  Tensor at = trans_a ? Tensor::matrix(m, k) : Tensor();
  Tensor bt = trans_b ? Tensor::matrix(k, n) : Tensor();
  for (std::size_t g = 0; g < groups; ++g) {
    const double* ab = a.value().data() + g * ar * ac;
    const double* bb = b.value().data() + g * br * bc;
    if (trans_a) {
      for (std::size_t i = 0; i < ar; ++i) {
        for (std::size_t j = 0; j < ac; ++j) at[j * k + i] = ab[i * ac + j];
      }
      ab = at.data();
    }
    if (trans_b) {
      for (std::size_t i = 0; i < br; ++i) {
        for (std::size_t j = 0; j < bc; ++j) bt[j * n + i] = bb[i * bc + j];
      }
      bb = bt.data();
    }
    K().gemm(m, n, k, ab, k, bb, n, out.data() + g * m * n, n, false);
  }
  return a.tape().record(
      std::move(out), {a, b},
      [a, b, groups, trans_a, trans_b](const Var&, const Var& g, auto needs, auto grads) {
        if (needs[0]) {
          grads[0] = trans_a ? group_matmul(b, g, groups, trans_b, true)
                             : group_matmul(g, b, groups, false, !trans_b);
        }
        if (needs[1]) {
          grads[1] = trans_b ? group_matmul(g, a, groups, true, trans_a)
                             : group_matmul(a, g, groups, !trans_a, false);
        }
      },
      "group_matmul");
}

namespace {

// Row r, column c of [G*T, H*d] maps to row (g*H + h)*T + t, column j of
// [G*H*T, d], with r = g*T + t and c = h*d + j.
Tensor permute_heads(const Tensor& x, std::size_t groups, std::size_t heads, bool split) {
  const std::size_t rows = split ? x.rows() / groups : x.rows() / (groups * heads);
  const std::size_t d = split ? x.cols() / heads : x.cols();
  Tensor out = split ? Tensor::matrix(groups * heads * rows, d) : Tensor::matrix(groups * rows, heads * d);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < rows; ++t) {
        const std::size_t wide = (g * rows + t) * heads * d + h * d;
        const std::size_t tall = ((g * heads + h) * rows + t) * d;
        if (split) {
          std::copy_n(x.data() + wide, d, out.data() + tall);
        } else {
          std::copy_n(x.data() + tall, d, out.data() + wide);
        }
      }
    }
  }
  return out;
}

}  // namespace

Var split_heads(const Var& x, std::size_t groups, std::size_t heads) {
  if (groups == 0 || heads == 0 || x.rows() % groups != 0 || x.cols() % heads != 0) {
    throw ShapeError("split_heads: " + dims(x.value()) + " does not split into " + std::to_string(groups) +
                     " groups of " + std::to_string(heads) + " heads");
  }
  return x.tape().record(permute_heads(x.value(), groups, heads, true), {x},
                         [groups, heads](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = merge_heads(g, groups, heads);
                         },
                         "split_heads");
}

Var merge_heads(const Var& x, std::size_t groups, std::size_t heads) {
  if (groups == 0 || heads == 0 || x.rows() % (groups * heads) != 0) {
    throw ShapeError("merge_heads: " + dims(x.value()) + " does not hold " + std::to_string(groups * heads) +
                     " row blocks");
  }
  return x.tape().record(permute_heads(x.value(), groups, heads, false), {x},
                         [groups, heads](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = split_heads(g, groups, heads);
                         },
                         "merge_heads");
}

Var add_row(const Var& x, const Var& v) {
  if (v.rows() != 1 || v.cols() != x.cols()) {
    throw ShapeError("add_row: " + dims(v.value()) + " is not a row of " + dims(x.value()));
  }
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out = like(x.value());
  for (std::size_t i = 0; i < m; ++i) K().add(n, x.value().data() + i * n, v.value().data(), out.data() + i * n);
  return x.tape().record(std::move(out), {x, v},
                         [](const Var&, const Var& g, auto needs, auto grads) {
                           if (needs[0]) grads[0] = g;
                           if (needs[1]) grads[1] = sum_rows(g);
                         },
                         "add_row");
}

Var broadcast_rows(const Var& v, std::size_t m) {
  if (v.rows() != 1) throw ShapeError("broadcast_rows: expected a single row, got " + dims(v.value()));
  const std::size_t n = v.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(v.value().data(), n, out.data() + i * n);
  return v.tape().record(std::move(out), {v},
                         [](const Var&, const Var& g, auto, auto grads) { grads[0] = sum_rows(g); },
                         "broadcast_rows");
}

Var sum_rows(const Var& x) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out = Tensor::matrix(1, n);
  for (std::size_t i = 0; i < m; ++i) K().add(n, out.data(), x.value().data() + i * n, out.data());
  return x.tape().record(std::move(out), {x},
                         [m](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = broadcast_rows(g, m);
                         },
                         "sum_rows");
}

Var broadcast_cols(const Var& v, std::size_t n) {
  if (v.cols() != 1) throw ShapeError("broadcast_cols: expected a single column, got " + dims(v.value()));
  const std::size_t m = v.rows();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) std::fill_n(out.data() + i * n, n, v.value()[i]);
  return v.tape().record(std::move(out), {v},
                         [](const Var&, const Var& g, auto, auto grads) { grads[0] = row_sums(g); },
                         "broadcast_cols");
}

Var row_sums(const Var& x) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out = Tensor::matrix(m, 1);
  for (std::size_t i = 0; i < m; ++i) out[i] = K().sum(n, x.value().data() + i * n);
  return x.tape().record(std::move(out), {x},
                         [n](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = broadcast_cols(g, n);
                         },
                         "row_sums");
}

Var sum_all(const Var& x) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out = Tensor::scalar(K().sum(x.value().size(), x.value().data()));
  return x.tape().record(std::move(out), {x},
                         [m, n](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = expand(g, m, n);
                         },
                         "sum_all");
}

Var expand(const Var& s, std::size_t m, std::size_t n) {
  Tensor out = Tensor::matrix(m, n, s.value().item());
  return s.tape().record(std::move(out), {s},
                         [](const Var&, const Var& g, auto, auto grads) { grads[0] = sum_all(g); },
                         "expand");
}

Var inner(const Var& a, const Var& b) { return sum_all(mul(a, b)); }

double unary_value(Unary kind, int order, double x) {
  switch (kind) {
    case Unary::Exp:
      return std::exp(x);
    case Unary::Log:
      switch (order) {
        case 0: return std::log(x);
        case 1: return 1.0 / x;
        case 2: return -1.0 / (x * x);
        default: return 2.0 / (x * x * x);
      }
    case Unary::Sigmoid: {
      const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      const double d = s * (1.0 - s);
      switch (order) {
        case 0: return s;
        case 1: return d;
        case 2: return d * (1.0 - 2.0 * s);
        default: return d * (1.0 - 6.0 * s + 6.0 * s * s);
      }
    }
    case Unary::Tanh: {
      const double t = std::tanh(x);
      const double d = 1.0 - t * t;
      switch (order) {
        case 0: return t;
        case 1: return d;
        case 2: return -2.0 * t * d;
        default: return d * (6.0 * t * t - 2.0);
      }
    }
    case Unary::Gelu: {
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
      switch (order) {
        case 0: return x * cdf;
        case 1: return cdf + x * pdf;
        case 2: return pdf * (2.0 - x * x);
        default: return pdf * (x * x * x - 4.0 * x);
      }
    }
    case Unary::Rsqrt: {
      const double r = 1.0 / std::sqrt(x);
      switch (order) {
        case 0: return r;
        case 1: return -0.5 * r / x;
        case 2: return 0.75 * r / (x * x);
        default: return -1.875 * r / (x * x * x);
      }
    }
  }
  return 0.0;
}

Var unary(const Var& x, Unary kind, int order) {
  if (order < 0 || order > 3) {
    throw Error("unary: derivative order " + std::to_string(order) + " not available");
  }
  Tensor out = like(x.value());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = unary_value(kind, order, in[i]);
  return x.tape().record(std::move(out), {x},
                         [x, kind, order](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = mul(g, unary(x, kind, order + 1));
                         },
                         "unary");
}

Var log_softmax_rows(const Var& x) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  const Tensor& in = x.value();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lz;
  }
  return x.tape().record(std::move(out), {x},
                         [n](const Var& y, const Var& g, auto, auto grads) {
                           grads[0] = sub(g, mul(exp(y), broadcast_cols(row_sums(g), n)));
                         },
                         "log_softmax_rows");
}

Var softmax_rows(const Var& x) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  const Tensor& in = x.value();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  return x.tape().record(std::move(out), {x},
                         [n](const Var& y, const Var& g, auto, auto grads) {
                           grads[0] = mul(y, sub(g, broadcast_cols(row_sums(mul(g, y)), n)));
                         },
                         "softmax_rows");
}

Var gather_rows(const Var& table, std::vector<std::uint32_t> ids) {
  const std::size_t rows = table.rows();
  const std::size_t n = table.cols();
  Tensor out = Tensor::matrix(ids.size(), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw DataError("gather_rows: index " + std::to_string(ids[i]) + " out of range " +
                      std::to_string(rows));
    }
    std::copy_n(table.value().data() + ids[i] * n, n, out.data() + i * n);
  }
  return table.tape().record(std::move(out), {table},
                             [ids = std::move(ids), rows](const Var&, const Var& g, auto, auto grads) {
                               grads[0] = scatter_add_rows(g, ids, rows);
                             },
                             "gather_rows");
}

Var scatter_add_rows(const Var& g, std::vector<std::uint32_t> ids, std::size_t rows) {
  const std::size_t n = g.cols();
  if (g.rows() != ids.size()) throw ShapeError("scatter_add_rows: row count mismatch");
  Tensor out = Tensor::matrix(rows, n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    K().add(n, out.data() + ids[i] * n, g.value().data() + i * n, out.data() + ids[i] * n);
  }
  return g.tape().record(std::move(out), {g},
                         [ids = std::move(ids)](const Var&, const Var& gg, auto, auto grads) {
                           grads[0] = gather_rows(gg, ids);
                         },
                         "scatter_add_rows");
}

Var pick(const Var& x, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols) {
  if (rows.size() != cols.size()) throw ShapeError("pick: index lists differ in length");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out = Tensor::matrix(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m || cols[i] >= n) throw DataError("pick: index out of range");
    out[i] = x.value()[rows[i] * n + cols[i]];
  }
  return x.tape().record(std::move(out), {x},
                         [rows = std::move(rows), cols = std::move(cols), m, n](
                             const Var&, const Var& g, auto, auto grads) {
                           grads[0] = place(g, rows, cols, m, n);
                         },
                         "pick");
}

Var place(const Var& g, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols,
          std::size_t m, std::size_t n) {
  if (g.value().size() != rows.size() || rows.size() != cols.size()) {
    throw ShapeError("place: index lists do not match values");
  }
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < rows.size(); ++i) out[rows[i] * n + cols[i]] += g.value()[i];
  return g.tape().record(std::move(out), {g},
                         [rows = std::move(rows), cols = std::move(cols)](
                             const Var&, const Var& gg, auto, auto grads) {
                           grads[0] = pick(gg, rows, cols);
                         },
                         "place");
}

Var slice(const Var& x, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (r0 + nr > m || c0 + nc > n) {
    throw ShapeError("slice: block exceeds " + dims(x.value()));
  }
  Tensor out = Tensor::matrix(nr, nc);
  for (std::size_t i = 0; i < nr; ++i) {
    std::copy_n(x.value().data() + (r0 + i) * n + c0, nc, out.data() + i * nc);
  }
  return x.tape().record(std::move(out), {x},
                         [r0, c0, m, n](const Var&, const Var& g, auto, auto grads) {
                           grads[0] = pad(g, r0, c0, m, n);
                         },
                         "slice");
}

Var pad(const Var& g, std::size_t r0, std::size_t c0, std::size_t m, std::size_t n) {
  const std::size_t nr = g.rows();
  const std::size_t nc = g.cols();
  if (r0 + nr > m || c0 + nc > n) throw ShapeError("pad: block exceeds target");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < nr; ++i) {
    std::copy_n(g.value().data() + i * nc, nc, out.data() + (r0 + i) * n + c0);
  }
  return g.tape().record(std::move(out), {g},
                         [r0, nr, c0, nc](const Var&, const Var& gg, auto, auto grads) {
                           grads[0] = slice(gg, r0, nr, c0, nc);
                         },
                         "pad");
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column counts differ");
    m += p.rows();
  }
  Tensor out = Tensor::matrix(m, n);
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::size_t r = 0;
  for (const Var& p : parts) {
    offsets.push_back(r);
    std::copy_n(p.value().data(), p.value().size(), out.data() + r * n);
    r += p.rows();
  }
  return parts[0].tape().record(
      std::move(out), parts,
      [offsets, parts, n](const Var&, const Var& g, auto needs, auto grads) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (needs[k]) grads[k] = slice(g, offsets[k], parts[k].rows(), 0, n);
        }
      },
      "concat_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    n += p.cols();
  }
  Tensor out = Tensor::matrix(m, n);
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::size_t c = 0;
  for (const Var& p : parts) {
    offsets.push_back(c);
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.value().data() + i * w, w, out.data() + i * n + c);
    c += w;
  }
  return parts[0].tape().record(
      std::move(out), parts,
      [offsets, parts, m](const Var&, const Var& g, auto needs, auto grads) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (needs[k]) grads[k] = slice(g, 0, m, offsets[k], parts[k].cols());
        }
      },
      "concat_cols");
}

}  // namespace bliss::ad
