#include "irff/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <cstdlib>
#include <thread>
#include <vector>

IRFF_BEGIN_NAMESPACE

namespace kernels {

namespace {

int initial_threads() {
    if (const char* env = std::getenv("IRFF_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

int g_threads = initial_threads();

// Minimum rows per worker before spawning threads pays off.
constexpr std::size_t kMinRowsPerThread = 16;

void transpose_into(const real* src, std::size_t rows, std::size_t cols, std::vector<real>& dst) {
    dst.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// Register-tiled row-major C rows [begin, end) += A * B. Every element of C
// is accumulated over p in increasing order.
constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 32;

void gemm_tile(std::size_t i0, std::size_t j0, std::size_t n, std::size_t k, const real* a, const real* b, real* c,
               bool accumulate) {
    real acc[kTileRows][kTileCols] = {};
    for (std::size_t p = 0; p < k; ++p) {
        const real* brow = b + p * n + j0;
        for (std::size_t r = 0; r < kTileRows; ++r) {
            const real av = a[(i0 + r) * k + p];
            for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
        real* crow = c + (i0 + r) * n + j0;
        for (std::size_t j = 0; j < kTileCols; ++j) crow[j] = accumulate ? crow[j] + acc[r][j] : acc[r][j];
    }
}

void gemm_edge(std::size_t i_begin, std::size_t i_end, std::size_t j_begin, std::size_t j_end, std::size_t n,
               std::size_t k, const real* a, const real* b, real* c, bool accumulate) {
    if (j_begin >= j_end) return;
    std::vector<real> acc(j_end - j_begin);
    for (std::size_t i = i_begin; i < i_end; ++i) {
        std::fill(acc.begin(), acc.end(), real(0));
        for (std::size_t p = 0; p < k; ++p) {
            const real av = a[i * k + p];
            const real* brow = b + p * n;
            for (std::size_t j = j_begin; j < j_end; ++j) acc[j - j_begin] += av * brow[j];
        }
        real* crow = c + i * n;
        for (std::size_t j = j_begin; j < j_end; ++j) {
            crow[j] = accumulate ? crow[j] + acc[j - j_begin] : acc[j - j_begin];
        }
    }
}

void gemm_rows(std::size_t begin, std::size_t end, std::size_t n, std::size_t k, const real* a, const real* b,
               real* c, bool accumulate) {
    const std::size_t full_rows = begin + (end - begin) / kTileRows * kTileRows;
    const std::size_t full_cols = n / kTileCols * kTileCols;
    for (std::size_t i0 = begin; i0 < full_rows; i0 += kTileRows) {
        for (std::size_t j0 = 0; j0 < full_cols; j0 += kTileCols) gemm_tile(i0, j0, n, k, a, b, c, accumulate);
    }
    gemm_edge(begin, full_rows, full_cols, n, n, k, a, b, c, accumulate);
    gemm_edge(full_rows, end, 0, n, n, k, a, b, c, accumulate);
}

}  // namespace

int thread_count() { return g_threads; }
void set_thread_count(int n) { g_threads = std::max(1, n); }

void parallel_rows(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    auto workers = static_cast<std::size_t>(g_threads);
    if (workers <= 1 || n < 2 * kMinRowsPerThread) {
        fn(0, n);
        return;
    }
    workers = std::min(workers, n / kMinRowsPerThread);
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min(n, chunk));
}

real dot(const real* a, const real* b, std::size_t n) {
    constexpr std::size_t kLanes = 16;
    real acc[kLanes] = {};
    std::size_t p = 0;
    for (; p + kLanes <= n; p += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[p + l] * b[p + l];
    real s = 0;
    for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
    for (; p < n; ++p) s += a[p] * b[p];
    return s;
}

double sum(const real* x, std::size_t n) {
    constexpr std::size_t kLanes = 16;
    real acc[kLanes] = {};
    std::size_t p = 0;
    for (; p + kLanes <= n; p += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] += x[p + l];
    double s = 0;
    for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
    for (; p < n; ++p) s += x[p];
    return s;
}

void exp_inplace(real* x, std::size_t n) {
    if constexpr (std::is_same_v<real, float>) {
        // e^v = 2^i * e^r, r = v - i*ln2 split in two parts (|r| <= ln2/2),
        // degree-7 Taylor series for e^r.
        for (std::size_t i = 0; i < n; ++i) {
            float v = static_cast<float>(x[i]);
            v = v < -87.0f ? -87.0f : v;
            v = v > 88.0f ? 88.0f : v;
            const float fi = (v * 1.44269504088896341f + 12582912.0f) - 12582912.0f;  // round to nearest
            const float r = (v - fi * 0.693145751953125f) - fi * 1.428606765330187e-06f;
            const float p =
                1.0f +
                r * (1.0f +
                     r * (0.5f +
                          r * (0.166666666666666667f +
                               r * (0.0416666666666666667f +
                                    r * (0.00833333333333333333f +
                                         r * (0.00138888888888888889f + r * 0.000198412698412698413f))))));
            const auto bits = static_cast<std::int32_t>(static_cast<std::int32_t>(fi) + 127) << 23;
            x[i] = static_cast<real>(p * std::bit_cast<float>(bits));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
    }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          const real* b, real* c, bool accumulate) {
    if (n < 32 && m >= 4 * n) {
        if (!trans_a && k >= 64) {
            // Narrow output, long reduction: one dot product per element.
            std::vector<real> bt;
            if (!trans_b) {
                transpose_into(b, k, n, bt);
                b = bt.data();
            }
            parallel_rows(m, [&](std::size_t begin, std::size_t end) {
                for (std::size_t i = begin; i < end; ++i) {
                    real* crow = c + i * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const real v = dot(a + i * k, b + j * k, k);
                        crow[j] = accumulate ? crow[j] + v : v;
                    }
                }
            });
            return;
        }
        // C^T = op(B)^T op(A)^T keeps the long axis innermost.
        std::vector<real> ct(n * m);
        gemm(!trans_b, !trans_a, n, m, k, b, a, ct.data(), false);
        for (std::size_t i = 0; i < m; ++i) {
            real* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] = accumulate ? crow[j] + ct[j * m + i] : ct[j * m + i];
        }
        return;
    }
    std::vector<real> at, bt;
    if (trans_a) {
        transpose_into(a, k, m, at);
        a = at.data();
    }
    if (trans_b) {
        transpose_into(b, n, k, bt);
        b = bt.data();
    }
    parallel_rows(m, [&](std::size_t begin, std::size_t end) { gemm_rows(begin, end, n, k, a, b, c, accumulate); });
}

}  // namespace kernels

IRFF_END_NAMESPACE
