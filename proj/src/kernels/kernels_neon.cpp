// NEON backend (aarch64). Two 2-lane accumulators emulate the 4-lane group of
// the reference kernels so results stay bit-identical with scalar and AVX2.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "attribaudit/kernels.hpp"

namespace attribaudit::kernels {

namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc01 = vdupq_n_f64(0.0);
    float64x2_t acc23 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc01 = vfmaq_f64(acc01, vld1q_f64(x + i), vld1q_f64(y + i));
        acc23 = vfmaq_f64(acc23, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    const double a0 = vgetq_lane_f64(acc01, 0);
    const double a1 = vgetq_lane_f64(acc01, 1);
    const double a2 = vgetq_lane_f64(acc23, 0);
    const double a3 = vgetq_lane_f64(acc23, 1);
    double tail = 0.0;
    for (; i < n; ++i) {
        tail = std::fma(x[i], y[i], tail);
    }
    return ((a0 + a1) + (a2 + a3)) + tail;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] = std::fma(a, x[i], y[i]);
    }
}

void scale_neon(double* x, std::size_t n, double a) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), va));
    }
    for (; i < n; ++i) {
        x[i] *= a;
    }
}

double sum_neon(const double* x, std::size_t n) {
    float64x2_t acc01 = vdupq_n_f64(0.0);
    float64x2_t acc23 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc01 = vaddq_f64(acc01, vld1q_f64(x + i));
        acc23 = vaddq_f64(acc23, vld1q_f64(x + i + 2));
    }
    const double a0 = vgetq_lane_f64(acc01, 0);
    const double a1 = vgetq_lane_f64(acc01, 1);
    const double a2 = vgetq_lane_f64(acc23, 0);
    const double a3 = vgetq_lane_f64(acc23, 1);
    double tail = 0.0;
    for (; i < n; ++i) {
        tail += x[i];
    }
    return ((a0 + a1) + (a2 + a3)) + tail;
}

const KernelTable kNeon{"neon", dot_neon, axpy_neon, scale_neon, sum_neon};

}  // namespace

const KernelTable& detail::neon_table() { return kNeon; }

}  // namespace attribaudit::kernels

#endif  // aarch64
