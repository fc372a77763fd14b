#include "attribaudit/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "attribaudit/errors.hpp"

namespace attribaudit::kernels {

namespace {

// Reference backend. The 4 independent accumulators and the final
// ((a0+a1)+(a2+a3)) combine mirror one 256-bit lane group; SIMD backends
// reproduce this order exactly.

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 = std::fma(x[i], y[i], a0);
        a1 = std::fma(x[i + 1], y[i + 1], a1);
        a2 = std::fma(x[i + 2], y[i + 2], a2);
        a3 = std::fma(x[i + 3], y[i + 3], a3);
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        tail = std::fma(x[i], y[i], tail);
    }
    return ((a0 + a1) + (a2 + a3)) + tail;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::fma(a, x[i], y[i]);
    }
}

void scale_scalar(double* x, std::size_t n, double a) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] *= a;
    }
}

double sum_scalar(const double* x, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += x[i];
        a1 += x[i + 1];
        a2 += x[i + 2];
        a3 += x[i + 3];
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        tail += x[i];
    }
    return ((a0 + a1) + (a2 + a3)) + tail;
}

const KernelTable kScalar{"scalar", dot_scalar, axpy_scalar, scale_scalar, sum_scalar};

const KernelTable* pick_default() {
    if (const char* env = std::getenv("ATTRIB_AUDIT_KERNELS")) {
        std::string want(env);
        if (want == "scalar") return &detail::scalar_table();
        if (want == "avx2") {
            if (const KernelTable* t = table_for(Backend::avx2)) return t;
            throw ConfigError("ATTRIB_AUDIT_KERNELS=avx2 but AVX2 is unavailable on this host");
        }
        if (want == "neon") {
            if (const KernelTable* t = table_for(Backend::neon)) return t;
            throw ConfigError("ATTRIB_AUDIT_KERNELS=neon but NEON is unavailable on this host");
        }
        throw ConfigError("unknown ATTRIB_AUDIT_KERNELS value '" + want + "'");
    }
    if (const KernelTable* t = table_for(Backend::avx2)) return t;
    if (const KernelTable* t = table_for(Backend::neon)) return t;
    return &kScalar;
}

const KernelTable*& active_ptr() {
    static const KernelTable* active = pick_default();
    return active;
}

}  // namespace

const KernelTable& detail::scalar_table() { return kScalar; }

const KernelTable& active() { return *active_ptr(); }

const KernelTable* table_for(Backend b) {
    switch (b) {
        case Backend::scalar:
            return &kScalar;
        case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
                return &detail::avx2_table();
            }
#endif
            return nullptr;
        case Backend::neon:
#if defined(__aarch64__)
            return &detail::neon_table();
#else
            return nullptr;
#endif
    }
    return nullptr;
}

void force_backend(Backend b) {
    const KernelTable* t = table_for(b);
    if (t == nullptr) {
        throw ConfigError("requested kernel backend is not available on this host");
    }
    active_ptr() = t;
}

Backend active_backend() {
    std::string_view n = backend_name();
    if (n == "avx2") return Backend::avx2;
    if (n == "neon") return Backend::neon;
    return Backend::scalar;
}

std::string_view backend_name() { return active().name; }

}  // namespace attribaudit::kernels
