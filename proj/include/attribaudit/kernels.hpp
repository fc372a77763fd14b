#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <string_view>

// Double-precision kernels behind the numeric hot loops (model forward/backward,
// attribution sweeps). Every backend implements the same fixed 4-lane FMA
// reduction order, so scalar and SIMD results are bit-identical; the
// equivalence tests assert exact equality, not a tolerance.

namespace attribaudit::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
    const char* name;
    double (*dot)(const double* x, const double* y, std::size_t n);
    void (*axpy)(double a, const double* x, double* y, std::size_t n);  // y += a*x
    void (*scale)(double* x, std::size_t n, double a);                  // x *= a
    double (*sum)(const double* x, std::size_t n);
};

// Active table. Picked once: AVX2+FMA on x86-64 when the CPU has it, NEON on
// aarch64, scalar otherwise. ATTRIB_AUDIT_KERNELS=scalar|avx2|neon overrides.
const KernelTable& active();

// Specific backend, or nullptr when not compiled in / not supported here.
const KernelTable* table_for(Backend b);

// Force a backend (tests, CLI flag). Throws ConfigError if unavailable.
void force_backend(Backend b);
Backend active_backend();
std::string_view backend_name();

inline double dot(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active().axpy(a, x.data(), y.data(), x.size());
}

inline void scale(std::span<double> x, double a) {
    active().scale(x.data(), x.size(), a);
}

inline double sum(std::span<const double> x) {
    return active().sum(x.data(), x.size());
}

// y = A x for row-major A (rows x cols).
inline void matvec(const double* a, std::size_t rows, std::size_t cols,
                   const double* x, double* y) {
    const KernelTable& k = active();
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = k.dot(a + r * cols, x, cols);
    }
}

// y += A^T x for row-major A (rows x cols); y has length cols.
inline void matvec_transpose_accum(const double* a, std::size_t rows, std::size_t cols,
                                   const double* x, double* y) {
    const KernelTable& k = active();
    for (std::size_t r = 0; r < rows; ++r) {
        k.axpy(x[r], a + r * cols, y, cols);
    }
}

namespace detail {
const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace attribaudit::kernels
