#pragma once

#include <cstddef>
#include <functional>

#include "irff/real.hpp"

IRFF_BEGIN_NAMESPACE

namespace kernels {

/// Worker count used by intra-op kernels. Read once from IRFF_THREADS
/// (default 1). Results are bitwise identical for any value because work is
/// split by output row and each row is reduced by a single thread.
int thread_count();
void set_thread_count(int n);

/// Calls fn(begin, end) over contiguous chunks of [0, n).
void parallel_rows(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// Sum of a[i] * b[i] with a fixed 16-lane accumulation order.
real dot(const real* a, const real* b, std::size_t n);

/// Sum with 16 lane partials, combined in double.
double sum(const real* x, std::size_t n);

/// x = exp(x). The float build uses a vectorizable polynomial (relative
/// error below 1e-6 on [-87, 88]); the double build calls std::exp.
void exp_inplace(real* x, std::size_t n);

/// C[m x n] (+)= op(A) * op(B), all row-major. op(A) is m x k, op(B) is k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          const real* b, real* c, bool accumulate);

}  // namespace kernels

IRFF_END_NAMESPACE
