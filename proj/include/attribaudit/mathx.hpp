#pragma once

#include <algorithm>
#include <cmath>

namespace attribaudit {

// Clamp keeps exp() finite and probabilities strictly inside (0, 1).
inline double stable_sigmoid(double z) {
    const double c = std::clamp(z, -36.7, 36.7);
    return 1.0 / (1.0 + std::exp(-c));
}

}  // namespace attribaudit
