// Compares the serial reference kernels against the OpenMP versions on the
// shapes the model actually produces. Useful for sizing thread counts; the
// two backends must agree numerically (the unit tests check that).

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "eegcn/kernels.hpp"
#include "eegcn/rng.hpp"
#include "eegcn/tensor.hpp"

using namespace eegcn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

double time_of(const std::function<void()>& fn, std::size_t reps) {
    using clock = std::chrono::steady_clock;
    fn();  // warmup
    const auto t0 = clock::now();
    for (std::size_t r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(clock::now() - t0).count() / reps;
}

void report(const char* name, double serial_s, double par_s) {
    std::printf("%-28s %10.3f us %10.3f us %8.2fx\n", name, serial_s * 1e6, par_s * 1e6,
                serial_s / par_s);
}

}  // namespace

int main() {
    std::printf("OpenMP compiled: %s, max threads: %d\n",
                kernels::openmp_compiled() ? "yes" : "no", kernels::max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    Rng rng(7);
    const std::size_t reps = 50;

    {
        const std::size_t m = 150, k = 150, n = 150;
        Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
        Tensor c({m, n});
        double s = time_of([&] {
            kernels::serial::gemm(false, false, m, n, k, a.data(), b.data(), c.data(), false);
        }, reps);
        double p = time_of([&] {
            kernels::par::gemm(false, false, m, n, k, a.data(), b.data(), c.data(), false);
        }, reps);
        report("gemm 150x150x150", s, p);
    }

    for (std::size_t n : {10UL, 50UL}) {
        const std::size_t d = 150, p = 50;
        Tensor e = random_tensor({n, n, p}, rng);
        Tensor h = random_tensor({n, d}, rng);
        Tensor wu = random_tensor({p + 2 * d, p}, rng);
        Tensor out({n, n, p});
        char name[64];
        std::snprintf(name, sizeof(name), "naeu fwd n=%zu d=150 p=50", n);
        double ts = time_of([&] {
            kernels::serial::naeu_forward(e.data(), h.data(), wu.data(), n, d, p, nullptr,
                                          out.data());
        }, reps);
        double tp = time_of([&] {
            kernels::par::naeu_forward(e.data(), h.data(), wu.data(), n, d, p, nullptr,
                                       out.data());
        }, reps);
        report(name, ts, tp);

        Tensor de({n, n, p}), dh({n, d}), dwu({p + 2 * d, p});
        Tensor dout = random_tensor({n, n, p}, rng);
        std::snprintf(name, sizeof(name), "naeu bwd n=%zu d=150 p=50", n);
        ts = time_of([&] {
            de.zero(); dh.zero(); dwu.zero();
            kernels::serial::naeu_backward(e.data(), h.data(), wu.data(), dout.data(),
                                           n, d, p, nullptr, de.data(), dh.data(),
                                           dwu.data());
        }, reps);
        tp = time_of([&] {
            de.zero(); dh.zero(); dwu.zero();
            kernels::par::naeu_backward(e.data(), h.data(), wu.data(), dout.data(),
                                        n, d, p, nullptr, de.data(), dh.data(),
                                        dwu.data());
        }, reps);
        report(name, ts, tp);
    }

    {
        const std::size_t n = 50, p = 50;
        Tensor e = random_tensor({n, n, p}, rng);
        Tensor out({n, n});
        double s = time_of([&] { kernels::serial::channel_mean(e.data(), n, p, out.data()); },
                           reps);
        double pr = time_of([&] { kernels::par::channel_mean(e.data(), n, p, out.data()); },
                            reps);
        report("channel_mean n=50 p=50", s, pr);
    }
    return 0;
}
