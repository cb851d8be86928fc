#include "rodenet/fixed_q20.hpp"

#include <cmath>
#include <stdexcept>

namespace rodenet {

namespace {
thread_local std::int64_t t_saturations = 0;
}

namespace detail {

std::int32_t q20_saturate(std::int64_t raw) noexcept {
    if (raw > kQ20MaxRaw) {
        ++t_saturations;
        return kQ20MaxRaw;
    }
    if (raw < kQ20MinRaw) {
        ++t_saturations;
        return -kQ20MaxRaw;
    }
    return static_cast<std::int32_t>(raw);
}

std::int64_t q20_round_q40(std::int64_t acc) noexcept {
    constexpr std::int64_t half = std::int64_t{1} << (kQ20FracBits - 1);
    // Integer division truncates toward zero, so biasing by +-half rounds to
    // nearest with ties away from zero.
    return acc >= 0 ? (acc + half) / kQ20One : (acc - half) / kQ20One;
}

std::int64_t q20_round_div(std::int64_t num, std::int64_t den) noexcept {
    const bool negative = (num < 0) != (den < 0);
    const std::int64_t an = num < 0 ? -num : num;
    const std::int64_t ad = den < 0 ? -den : den;
    const std::int64_t q = (an + ad / 2) / ad;
    return negative ? -q : q;
}

}  // namespace detail

FixedQ20 q20_from_f64(double x) {
    if (std::isnan(x)) {
        throw std::invalid_argument("q20_from_f64: NaN input");
    }
    if (x >= 2048.0) {
        ++t_saturations;
        return FixedQ20{kQ20MaxRaw};
    }
    if (x <= -2048.0) {
        if (x < -2048.0) ++t_saturations;
        return FixedQ20{kQ20MinRaw};
    }
    const long long r = std::llround(x * static_cast<double>(kQ20One));
    if (r > kQ20MaxRaw) {
        ++t_saturations;
        return FixedQ20{kQ20MaxRaw};
    }
    return FixedQ20{static_cast<std::int32_t>(r)};
}

double q20_to_f64(FixedQ20 a) noexcept {
    return std::ldexp(static_cast<double>(a.raw), -kQ20FracBits);
}

FixedQ20 q20_add(FixedQ20 a, FixedQ20 b) noexcept {
    return FixedQ20{detail::q20_saturate(static_cast<std::int64_t>(a.raw) + b.raw)};
}

FixedQ20 q20_sub(FixedQ20 a, FixedQ20 b) noexcept {
    return FixedQ20{detail::q20_saturate(static_cast<std::int64_t>(a.raw) - b.raw)};
}

FixedQ20 q20_mul(FixedQ20 a, FixedQ20 b) noexcept {
    const std::int64_t prod = static_cast<std::int64_t>(a.raw) * b.raw;
    return FixedQ20{detail::q20_saturate(detail::q20_round_q40(prod))};
}

FixedQ20 q20_div(FixedQ20 a, FixedQ20 b) {
    if (b.raw == 0) {
        throw std::domain_error("q20_div: division by zero");
    }
    const std::int64_t num = static_cast<std::int64_t>(a.raw) << kQ20FracBits;
    return FixedQ20{detail::q20_saturate(detail::q20_round_div(num, b.raw))};
}

FixedQ20 q20_sqrt(FixedQ20 a) {
    if (a.raw < 0) {
        throw std::domain_error("q20_sqrt: negative input");
    }
    if (a.raw == 0) return FixedQ20{0};
    // sqrt(raw / 2^20) in Q20 equals the integer sqrt of raw << 20.
    const std::int64_t n = static_cast<std::int64_t>(a.raw) << kQ20FracBits;
    std::int64_t s = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
    while (s > 0 && s * s > n) --s;
    while ((s + 1) * (s + 1) <= n) ++s;
    if (n - s * s > s) ++s;  // nearest integer root
    return FixedQ20{static_cast<std::int32_t>(s)};
}

std::int64_t q20_saturation_count() noexcept { return t_saturations; }

void q20_reset_saturation_count() noexcept { t_saturations = 0; }

}  // namespace rodenet
