// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "bliss/autodiff/tape.hpp"

// Differentiable ops on rank <= 2 tensors. Every backward rule is expressed
// with these same ops, so gradients are differentiable to second order.
// Results are rank-2 unless noted.
namespace bliss::ad {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double alpha);
Var add_scalar(const Var& a, double c);
Var reshape(const Var& a, std::vector<std::size_t> shape);

/// a[m,k] * b[k,n]
Var matmul(const Var& a, const Var& b);
/// a[m,k] * b[n,k]^T
Var matmul_nt(const Var& a, const Var& b);
/// a[k,m]^T * b[k,n]
Var matmul_tn(const Var& a, const Var& b);

/// Row-stacked groups: block g of the result is op(a_g) * op(b_g), where a_g
/// and b_g are the g-th of `groups` equal row blocks and op transposes when
/// the matching flag is set.
Var group_matmul(const Var& a, const Var& b, std::size_t groups, bool trans_a, bool trans_b);

/// [G*T, H*d] -> [G*H*T, d]: column block h of row block g becomes row block
/// g*H + h. merge_heads is the inverse.
Var split_heads(const Var& x, std::size_t groups, std::size_t heads);
Var merge_heads(const Var& x, std::size_t groups, std::size_t heads);

/// x[m,n] + v[1,n] on every row.
Var add_row(const Var& x, const Var& v);

/// [1,n] -> [m,n]
Var broadcast_rows(const Var& v, std::size_t m);
/// [m,n] -> [1,n]
Var sum_rows(const Var& x);
/// [m,1] -> [m,n]
Var broadcast_cols(const Var& v, std::size_t n);
/// [m,n] -> [m,1]
Var row_sums(const Var& x);
/// any -> scalar (rank 0)
Var sum_all(const Var& x);
/// scalar -> [m,n] filled
Var expand(const Var& s, std::size_t m, std::size_t n);

/// Sum of elementwise products; scalar.
Var inner(const Var& a, const Var& b);

enum class Unary : std::uint8_t { Exp, Log, Sigmoid, Tanh, Gelu, Rsqrt };

/// order-th derivative of the chosen function, elementwise. Orders 0..3 are
/// available, so values and gradients differentiate twice.
Var unary(const Var& x, Unary kind, int order = 0);
inline Var exp(const Var& x) { return unary(x, Unary::Exp); }
inline Var log(const Var& x) { return unary(x, Unary::Log); }
inline Var sigmoid(const Var& x) { return unary(x, Unary::Sigmoid); }
inline Var tanh(const Var& x) { return unary(x, Unary::Tanh); }
inline Var gelu(const Var& x) { return unary(x, Unary::Gelu); }
inline Var rsqrt(const Var& x) { return unary(x, Unary::Rsqrt); }
double unary_value(Unary kind, int order, double x);

/// Row-wise, max-shifted.
Var log_softmax_rows(const Var& x);
Var softmax_rows(const Var& x);

/// out[i,:] = table[ids[i],:]
Var gather_rows(const Var& table, std::vector<std::uint32_t> ids);
/// out[ids[i],:] += g[i,:] into a rows x cols zero matrix.
Var scatter_add_rows(const Var& g, std::vector<std::uint32_t> ids, std::size_t rows);

/// [k,1] column of x[rows[i], cols[i]].
Var pick(const Var& x, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols);
/// Inverse layout of pick: an m x n zero matrix with g[i] added at (rows[i], cols[i]).
Var place(const Var& g, std::vector<std::uint32_t> rows, std::vector<std::uint32_t> cols,
          std::size_t m, std::size_t n);

/// Sub-block x[r0:r0+nr, c0:c0+nc].
Var slice(const Var& x, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc);
/// g placed at (r0, c0) inside an m x n zero matrix.
Var pad(const Var& g, std::size_t r0, std::size_t c0, std::size_t m, std::size_t n);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

}  // namespace bliss::ad
