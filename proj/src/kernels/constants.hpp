#pragma once

namespace otsns::kernels::detail {

// exp of anything below this is returned as 0. exp(-708) is the smallest
// normal-range result; producing subnormals costs a microcode assist per lane
// and every caller shifts by a maximum, so such terms are below rounding.
inline constexpr double kExpFlushBelow = -708.0;

}  // namespace otsns::kernels::detail

// Taylor coefficients of (e^u - 1 - u) / u^2 = sum_{k>=2} u^(k-2) / k!,
// truncated at k = 17. Used for |u| < kPhiSeriesBound.
namespace otsns::kernels::detail {

inline constexpr double kPhiSeriesBound = 0.5;

inline constexpr double kPhiCoefficients[] = {
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362880.0,
    1.0 / 3628800.0,
    1.0 / 39916800.0,
    1.0 / 479001600.0,
    1.0 / 6227020800.0,
    1.0 / 87178291200.0,
    1.0 / 1307674368000.0,
    1.0 / 20922789888000.0,
    1.0 / 355687428096000.0,
};

inline constexpr int kPhiTerms = sizeof(kPhiCoefficients) / sizeof(double);

}  // namespace otsns::kernels::detail
