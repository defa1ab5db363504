#include "eegcn/kernels.hpp"

#include <atomic>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eegcn::kernels {

namespace {

std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::Parallel
#else
    Backend::Serial
#endif
};

// OpenMP is only worth spinning up above roughly this much work.
constexpr std::size_t kGemmCutoff = 1 << 15;
constexpr std::size_t kPairCutoff = 1 << 12;

}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

bool openmp_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// ---------------------------------------------------------------------------
// gemm
//
// Each output row is produced by a single thread and every C[i,j] sums its k
// terms in ascending order, so serial and parallel results are bitwise equal.

namespace detail {

inline void gemm_row_nn(std::size_t i, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c, bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, n * sizeof(double));
    const double* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void gemm_row_nt(std::size_t i, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c, bool accumulate) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
        crow[j] = accumulate ? crow[j] + s : s;
    }
}

inline void gemm_row_tn(std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c, bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, n * sizeof(double));
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = a[kk * m + i];
        const double* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void gemm_row_tt(std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c, bool accumulate) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) s += a[kk * m + i] * brow[kk];
        crow[j] = accumulate ? crow[j] + s : s;
    }
}

inline void gemm_dispatch_row(bool trans_a, bool trans_b, std::size_t i,
                              std::size_t m, std::size_t n, std::size_t k,
                              const double* a, const double* b, double* c,
                              bool accumulate) {
    if (!trans_a && !trans_b) gemm_row_nn(i, n, k, a, b, c, accumulate);
    else if (!trans_a && trans_b) gemm_row_nt(i, n, k, a, b, c, accumulate);
    else if (trans_a && !trans_b) gemm_row_tn(i, m, n, k, a, b, c, accumulate);
    else gemm_row_tt(i, m, n, k, a, b, c, accumulate);
}

}  // namespace detail

void serial::gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        detail::gemm_dispatch_row(trans_a, trans_b, i, m, n, k, a, b, c, accumulate);
    }
}

void par::gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c, bool accumulate) {
    const std::size_t work = m * n * k;
#pragma omp parallel for schedule(static) if (work > kGemmCutoff)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        detail::gemm_dispatch_row(trans_a, trans_b, static_cast<std::size_t>(i),
                                  m, n, k, a, b, c, accumulate);
    }
    (void)work;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
    if (backend() == Backend::Parallel) {
        par::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
    } else {
        serial::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
    }
}

// ---------------------------------------------------------------------------
// channel mean

void serial::channel_mean(const double* e, std::size_t n, std::size_t p, double* out) {
    const double inv = 1.0 / static_cast<double>(p);
    const std::size_t pairs = n * n;
    for (std::size_t q = 0; q < pairs; ++q) {
        const double* ev = e + q * p;
        double s = 0.0;
        for (std::size_t c = 0; c < p; ++c) s += ev[c];
        out[q] = s * inv;
    }
}

void par::channel_mean(const double* e, std::size_t n, std::size_t p, double* out) {
    const double inv = 1.0 / static_cast<double>(p);
    const std::size_t pairs = n * n;
#pragma omp parallel for schedule(static) if (pairs* p > kPairCutoff)
    for (long long q = 0; q < static_cast<long long>(pairs); ++q) {
        const double* ev = e + static_cast<std::size_t>(q) * p;
        double s = 0.0;
        for (std::size_t c = 0; c < p; ++c) s += ev[c];
        out[q] = s * inv;
    }
}

void channel_mean(const double* e, std::size_t n, std::size_t p, double* out) {
    if (backend() == Backend::Parallel) par::channel_mean(e, n, p, out);
    else serial::channel_mean(e, n, p, out);
}

void serial::channel_mean_backward(const double* d_out, std::size_t n, std::size_t p,
                                   double* d_e) {
    const double inv = 1.0 / static_cast<double>(p);
    const std::size_t pairs = n * n;
    for (std::size_t q = 0; q < pairs; ++q) {
        const double g = d_out[q] * inv;
        double* ev = d_e + q * p;
        for (std::size_t c = 0; c < p; ++c) ev[c] += g;
    }
}

void par::channel_mean_backward(const double* d_out, std::size_t n, std::size_t p,
                                double* d_e) {
    const double inv = 1.0 / static_cast<double>(p);
    const std::size_t pairs = n * n;
#pragma omp parallel for schedule(static) if (pairs* p > kPairCutoff)
    for (long long q = 0; q < static_cast<long long>(pairs); ++q) {
        const double g = d_out[q] * inv;
        double* ev = d_e + static_cast<std::size_t>(q) * p;
        for (std::size_t c = 0; c < p; ++c) ev[c] += g;
    }
}

void channel_mean_backward(const double* d_out, std::size_t n, std::size_t p, double* d_e) {
    if (backend() == Backend::Parallel) par::channel_mean_backward(d_out, n, p, d_e);
    else serial::channel_mean_backward(d_out, n, p, d_e);
}

// ---------------------------------------------------------------------------
// relu

void serial::relu(const double* x, std::size_t count, double* out) {
    for (std::size_t i = 0; i < count; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void par::relu(const double* x, std::size_t count, double* out) {
#pragma omp parallel for schedule(static) if (count > kPairCutoff)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
        out[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
}

void relu(const double* x, std::size_t count, double* out) {
    if (backend() == Backend::Parallel) par::relu(x, count, out);
    else serial::relu(x, count, out);
}

void serial::relu_backward(const double* out, const double* d_out, std::size_t count,
                           double* d_x) {
    for (std::size_t i = 0; i < count; ++i) {
        if (out[i] > 0.0) d_x[i] += d_out[i];
    }
}

void par::relu_backward(const double* out, const double* d_out, std::size_t count,
                        double* d_x) {
#pragma omp parallel for schedule(static) if (count > kPairCutoff)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
        if (out[i] > 0.0) d_x[i] += d_out[i];
    }
}

void relu_backward(const double* out, const double* d_out, std::size_t count, double* d_x) {
    if (backend() == Backend::Parallel) par::relu_backward(out, d_out, count, d_x);
    else serial::relu_backward(out, d_out, count, d_x);
}

// ---------------------------------------------------------------------------
// node-aware edge update
//
// The serial kernel is the literal per-pair form: concatenate the edge vector
// with both endpoint states and multiply by the full transform. The parallel
// kernel splits the transform into its edge/left/right row blocks so the two
// endpoint products are shared across pairs, which cuts the pair loop from
// (p+2d)*p to p*p multiplies.

void serial::naeu_forward(const double* e, const double* h, const double* wu,
                          std::size_t n, std::size_t d, std::size_t p,
                          const std::uint8_t* mask, double* e_out) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t q = i * n + j;
            double* outv = e_out + q * p;
            if (mask && !mask[q]) {
                for (std::size_t c = 0; c < p; ++c) outv[c] = 0.0;
                continue;
            }
            const double* ev = e + q * p;
            const double* hi = h + i * d;
            const double* hj = h + j * d;
            for (std::size_t c = 0; c < p; ++c) {
                double s = 0.0;
                for (std::size_t k = 0; k < p; ++k) s += ev[k] * wu[k * p + c];
                for (std::size_t k = 0; k < d; ++k) s += hi[k] * wu[(p + k) * p + c];
                for (std::size_t k = 0; k < d; ++k) s += hj[k] * wu[(p + d + k) * p + c];
                outv[c] = s;
            }
        }
    }
}

void par::naeu_forward(const double* e, const double* h, const double* wu,
                       std::size_t n, std::size_t d, std::size_t p,
                       const std::uint8_t* mask, double* e_out) {
    // left = H * Wu[p : p+d, :], right = H * Wu[p+d : p+2d, :]
    std::vector<double> left(n * p), right(n * p);
    par::gemm(false, false, n, p, d, h, wu + p * p, left.data(), false);
    par::gemm(false, false, n, p, d, h, wu + (p + d) * p, right.data(), false);

    const std::size_t pairs = n * n;
#pragma omp parallel for schedule(static) if (pairs* p* p > kPairCutoff)
    for (long long qq = 0; qq < static_cast<long long>(pairs); ++qq) {
        const std::size_t q = static_cast<std::size_t>(qq);
        double* outv = e_out + q * p;
        if (mask && !mask[q]) {
            for (std::size_t c = 0; c < p; ++c) outv[c] = 0.0;
            continue;
        }
        const std::size_t i = q / n;
        const std::size_t j = q % n;
        const double* ev = e + q * p;
        const double* li = left.data() + i * p;
        const double* rj = right.data() + j * p;
        for (std::size_t c = 0; c < p; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < p; ++k) s += ev[k] * wu[k * p + c];
            outv[c] = s + li[c] + rj[c];
        }
    }
}

void naeu_forward(const double* e, const double* h, const double* wu,
                  std::size_t n, std::size_t d, std::size_t p,
                  const std::uint8_t* mask, double* e_out) {
    if (backend() == Backend::Parallel) par::naeu_forward(e, h, wu, n, d, p, mask, e_out);
    else serial::naeu_forward(e, h, wu, n, d, p, mask, e_out);
}

void serial::naeu_backward(const double* e, const double* h, const double* wu,
                           const double* d_eout,
                           std::size_t n, std::size_t d, std::size_t p,
                           const std::uint8_t* mask,
                           double* d_e, double* d_h, double* d_wu) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t q = i * n + j;
            if (mask && !mask[q]) continue;
            const double* gout = d_eout + q * p;
            const double* ev = e + q * p;
            const double* hi = h + i * d;
            const double* hj = h + j * d;
            double* dei = d_e + q * p;
            double* dhi = d_h + i * d;
            double* dhj = d_h + j * d;
            for (std::size_t k = 0; k < p; ++k) {
                double s = 0.0;
                for (std::size_t c = 0; c < p; ++c) s += gout[c] * wu[k * p + c];
                dei[k] += s;
            }
            for (std::size_t k = 0; k < d; ++k) {
                double sa = 0.0, sb = 0.0;
                for (std::size_t c = 0; c < p; ++c) {
                    sa += gout[c] * wu[(p + k) * p + c];
                    sb += gout[c] * wu[(p + d + k) * p + c];
                }
                dhi[k] += sa;
                dhj[k] += sb;
            }
            for (std::size_t k = 0; k < p; ++k) {
                const double v = ev[k];
                double* dwrow = d_wu + k * p;
                for (std::size_t c = 0; c < p; ++c) dwrow[c] += v * gout[c];
            }
            for (std::size_t k = 0; k < d; ++k) {
                const double vi = hi[k];
                const double vj = hj[k];
                double* dwa = d_wu + (p + k) * p;
                double* dwb = d_wu + (p + d + k) * p;
                for (std::size_t c = 0; c < p; ++c) {
                    dwa[c] += vi * gout[c];
                    dwb[c] += vj * gout[c];
                }
            }
        }
    }
}

void par::naeu_backward(const double* e, const double* h, const double* wu,
                        const double* d_eout,
                        std::size_t n, std::size_t d, std::size_t p,
                        const std::uint8_t* mask,
                        double* d_e, double* d_h, double* d_wu) {
    const std::size_t pairs = n * n;

    // d_e[q,:] = d_eout[q,:] * Wu_e^T, per pair.
#pragma omp parallel for schedule(static) if (pairs* p* p > kPairCutoff)
    for (long long qq = 0; qq < static_cast<long long>(pairs); ++qq) {
        const std::size_t q = static_cast<std::size_t>(qq);
        if (mask && !mask[q]) continue;
        const double* gout = d_eout + q * p;
        double* dei = d_e + q * p;
        for (std::size_t k = 0; k < p; ++k) {
            double s = 0.0;
            const double* wrow = wu + k * p;
            for (std::size_t c = 0; c < p; ++c) s += gout[c] * wrow[c];
            dei[k] += s;
        }
    }

    // Row/column sums of the upstream gradient feed the endpoint blocks.
    std::vector<double> grow(n * p, 0.0), gcol(n * p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t q = i * n + j;
            if (mask && !mask[q]) continue;
            const double* gout = d_eout + q * p;
            double* gr = grow.data() + i * p;
            double* gc = gcol.data() + j * p;
            for (std::size_t c = 0; c < p; ++c) {
                gr[c] += gout[c];
                gc[c] += gout[c];
            }
        }
    }

    // d_h += grow * Wu_a^T + gcol * Wu_b^T
    par::gemm(false, true, n, d, p, grow.data(), wu + p * p, d_h, true);
    par::gemm(false, true, n, d, p, gcol.data(), wu + (p + d) * p, d_h, true);

    // d_wu edge block: rows owned per thread, pair loop inside.
#pragma omp parallel for schedule(static) if (pairs* p* p > kPairCutoff)
    for (long long kk = 0; kk < static_cast<long long>(p); ++kk) {
        const std::size_t k = static_cast<std::size_t>(kk);
        double* dwrow = d_wu + k * p;
        for (std::size_t q = 0; q < pairs; ++q) {
            if (mask && !mask[q]) continue;
            const double v = e[q * p + k];
            if (v == 0.0) continue;
            const double* gout = d_eout + q * p;
            for (std::size_t c = 0; c < p; ++c) dwrow[c] += v * gout[c];
        }
    }

    // d_wu endpoint blocks: H^T * grow and H^T * gcol.
    par::gemm(true, false, d, p, n, h, grow.data(), d_wu + p * p, true);
    par::gemm(true, false, d, p, n, h, gcol.data(), d_wu + (p + d) * p, true);
}

void naeu_backward(const double* e, const double* h, const double* wu,
                   const double* d_eout,
                   std::size_t n, std::size_t d, std::size_t p,
                   const std::uint8_t* mask,
                   double* d_e, double* d_h, double* d_wu) {
    if (backend() == Backend::Parallel) {
        par::naeu_backward(e, h, wu, d_eout, n, d, p, mask, d_e, d_h, d_wu);
    } else {
        serial::naeu_backward(e, h, wu, d_eout, n, d, p, mask, d_e, d_h, d_wu);
    }
}

}  // namespace eegcn::kernels
