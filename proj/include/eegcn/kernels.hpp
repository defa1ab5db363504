#ifndef EEGCN_KERNELS_HPP
#define EEGCN_KERNELS_HPP

#include <cstddef>
#include <cstdint>

namespace eegcn::kernels {

/// Serial kernels are straightforward reference loops; parallel kernels are
/// OpenMP versions tuned for the shapes the model produces. Every parallel
/// kernel partitions work by output element, so results do not depend on the
/// thread count. The two backends agree bitwise for gemm/channel/relu and to
/// ~1e-13 for the edge-update kernels, which regroup the summation.
enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int max_threads();

// C (m x n) = op(A) * op(B), or += if accumulate.
// op(A) is A (m x k) or A^T with A stored k x m; same for B.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);

// out (n x n) = mean over channels of e (n x n x p).
void channel_mean(const double* e, std::size_t n, std::size_t p, double* out);
// d_e (n x n x p) += d_out (n x n) / p.
void channel_mean_backward(const double* d_out, std::size_t n, std::size_t p, double* d_e);

// out = max(x, 0); d_x += d_out where out > 0.
void relu(const double* x, std::size_t count, double* out);
void relu_backward(const double* out, const double* d_out, std::size_t count, double* d_x);

// Node-aware edge update. e: n*n*p, h: n*d, wu: (p+2d) x p row-major with the
// row blocks ordered edge, left endpoint, right endpoint. mask (n*n, nullable)
// restricts the update to marked pairs; unmarked outputs are zero.
void naeu_forward(const double* e, const double* h, const double* wu,
                  std::size_t n, std::size_t d, std::size_t p,
                  const std::uint8_t* mask, double* e_out);
// Gradients accumulate into d_e, d_h, d_wu (all pre-allocated, same layouts).
void naeu_backward(const double* e, const double* h, const double* wu,
                   const double* d_eout,
                   std::size_t n, std::size_t d, std::size_t p,
                   const std::uint8_t* mask,
                   double* d_e, double* d_h, double* d_wu);

namespace serial {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);
void channel_mean(const double* e, std::size_t n, std::size_t p, double* out);
void channel_mean_backward(const double* d_out, std::size_t n, std::size_t p, double* d_e);
void relu(const double* x, std::size_t count, double* out);
void relu_backward(const double* out, const double* d_out, std::size_t count, double* d_x);
void naeu_forward(const double* e, const double* h, const double* wu,
                  std::size_t n, std::size_t d, std::size_t p,
                  const std::uint8_t* mask, double* e_out);
void naeu_backward(const double* e, const double* h, const double* wu,
                   const double* d_eout,
                   std::size_t n, std::size_t d, std::size_t p,
                   const std::uint8_t* mask,
                   double* d_e, double* d_h, double* d_wu);
}  // namespace serial

namespace par {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);
void channel_mean(const double* e, std::size_t n, std::size_t p, double* out);
void channel_mean_backward(const double* d_out, std::size_t n, std::size_t p, double* d_e);
void relu(const double* x, std::size_t count, double* out);
void relu_backward(const double* out, const double* d_out, std::size_t count, double* d_x);
void naeu_forward(const double* e, const double* h, const double* wu,
                  std::size_t n, std::size_t d, std::size_t p,
                  const std::uint8_t* mask, double* e_out);
void naeu_backward(const double* e, const double* h, const double* wu,
                   const double* d_eout,
                   std::size_t n, std::size_t d, std::size_t p,
                   const std::uint8_t* mask,
                   double* d_e, double* d_h, double* d_wu);
}  // namespace par

}  // namespace eegcn::kernels

#endif  // EEGCN_KERNELS_HPP
