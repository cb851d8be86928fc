#pragma once

#include <cstdint>

namespace rodenet {

/// 32-bit signed fixed-point scalar with 20 fractional bits (Q11.20).
/// value = raw / 2^20; representable range is [-2048, 2048 - 2^-20].
/// Arithmetic saturates instead of wrapping; saturation events are counted
/// per thread as a diagnostic (see q20_saturation_count).
struct FixedQ20 {
    std::int32_t raw = 0;

    constexpr FixedQ20() = default;
    constexpr explicit FixedQ20(std::int32_t r) : raw(r) {}

    friend constexpr bool operator==(FixedQ20, FixedQ20) = default;
    friend constexpr auto operator<=>(FixedQ20, FixedQ20) = default;
};

inline constexpr int kQ20FracBits = 20;
inline constexpr std::int64_t kQ20One = std::int64_t{1} << kQ20FracBits;
inline constexpr std::int32_t kQ20MaxRaw = 2147483647;            // 2048 - 2^-20
inline constexpr std::int32_t kQ20MinRaw = -2147483647 - 1;       // -2048

/// Nearest representable value, ties away from zero. Saturates for |x| >= 2048.
/// NaN is a contract violation and throws.
FixedQ20 q20_from_f64(double x);
double q20_to_f64(FixedQ20 a) noexcept;

FixedQ20 q20_add(FixedQ20 a, FixedQ20 b) noexcept;
FixedQ20 q20_sub(FixedQ20 a, FixedQ20 b) noexcept;

/// Product in a 64-bit intermediate, rounded to nearest at bit 20 (ties away
/// from zero), saturated.
FixedQ20 q20_mul(FixedQ20 a, FixedQ20 b) noexcept;

/// Round-to-nearest quotient; throws std::domain_error on division by zero.
FixedQ20 q20_div(FixedQ20 a, FixedQ20 b);

/// Integer Newton square root under a 64-bit intermediate; result is within
/// 1 ulp of the exact root. Throws std::domain_error for negative input.
FixedQ20 q20_sqrt(FixedQ20 a);

/// Saturation events observed on the calling thread since the last reset.
std::int64_t q20_saturation_count() noexcept;
void q20_reset_saturation_count() noexcept;

namespace detail {

/// Clamp a raw Q20 value held in 64 bits. Positive overflow clamps to
/// 2048 - 2^-20; negative overflow clamps symmetrically to -(2048 - 2^-20)
/// so that saturated magnitudes are equal in both directions. The exact
/// value -2048 (raw INT32_MIN) passes through untouched.
std::int32_t q20_saturate(std::int64_t raw) noexcept;

/// Round a Q40 accumulator (e.g. a sum of raw*raw products) to raw Q20,
/// nearest with ties away from zero. No saturation.
std::int64_t q20_round_q40(std::int64_t acc) noexcept;

/// Nearest integer quotient, ties away from zero. den must be nonzero.
std::int64_t q20_round_div(std::int64_t num, std::int64_t den) noexcept;

}  // namespace detail

}  // namespace rodenet
