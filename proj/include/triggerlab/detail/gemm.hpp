#pragma once

#include <cstddef>
#include <cstring>

namespace triggerlab::detail {

// C[m][n] += A[m][k] * B[k][n], all row-major and dense.
//
// Blocked 4 rows x 64 columns so the accumulator tile stays in registers and
// each B row is streamed once per row block; the inner loop over j is a plain
// FMA chain the compiler vectorizes. Per output row the update order (n block,
// then k ascending, then j ascending) is identical in every kernel variant, so
// results do not depend on how rows are grouped.
template <class T>
void gemm_acc(T* __restrict c, const T* __restrict a, const T* __restrict b, int m, int k, int n) {
    constexpr int MR = 4;
    constexpr int NB = 64;
    int i = 0;
    for (; i + MR <= m; i += MR) {
        const T* a0 = a + static_cast<std::size_t>(i) * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        T* c0 = c + static_cast<std::size_t>(i) * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (int n0 = 0; n0 < n; n0 += NB) {
            const int nb = n - n0 < NB ? n - n0 : NB;
            T t0[NB], t1[NB], t2[NB], t3[NB];
            for (int j = 0; j < nb; ++j) t0[j] = c0[n0 + j];
            for (int j = 0; j < nb; ++j) t1[j] = c1[n0 + j];
            for (int j = 0; j < nb; ++j) t2[j] = c2[n0 + j];
            for (int j = 0; j < nb; ++j) t3[j] = c3[n0 + j];
            for (int kk = 0; kk < k; ++kk) {
                const T* brow = b + static_cast<std::size_t>(kk) * n + n0;
                const T v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
                for (int j = 0; j < nb; ++j) {
                    t0[j] += v0 * brow[j];
                    t1[j] += v1 * brow[j];
                    t2[j] += v2 * brow[j];
                    t3[j] += v3 * brow[j];
                }
            }
            for (int j = 0; j < nb; ++j) c0[n0 + j] = t0[j];
            for (int j = 0; j < nb; ++j) c1[n0 + j] = t1[j];
            for (int j = 0; j < nb; ++j) c2[n0 + j] = t2[j];
            for (int j = 0; j < nb; ++j) c3[n0 + j] = t3[j];
        }
    }
    for (; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int n0 = 0; n0 < n; n0 += NB) {
            const int nb = n - n0 < NB ? n - n0 : NB;
            T t[NB];
            for (int j = 0; j < nb; ++j) t[j] = crow[n0 + j];
            for (int kk = 0; kk < k; ++kk) {
                const T* brow = b + static_cast<std::size_t>(kk) * n + n0;
                const T v = arow[kk];
                for (int j = 0; j < nb; ++j) t[j] += v * brow[j];
            }
            for (int j = 0; j < nb; ++j) crow[n0 + j] = t[j];
        }
    }
}

// C[m][n] = A[m][k] * B[k][n].
template <class T>
void gemm(T* c, const T* a, const T* b, int m, int k, int n) {
    std::memset(c, 0, sizeof(T) * static_cast<std::size_t>(m) * n);
    gemm_acc(c, a, b, m, k, n);
}

// dst[cols][rows] = src[rows][cols]^T.
template <class T>
void transpose(T* __restrict dst, const T* __restrict src, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int col = 0; col < cols; ++col)
            dst[static_cast<std::size_t>(col) * rows + r] = src[static_cast<std::size_t>(r) * cols + col];
}

}  // namespace triggerlab::detail
