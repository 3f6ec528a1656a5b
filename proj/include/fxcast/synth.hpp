#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fxcast/errors.hpp"
#include "fxcast/frame.hpp"
#include "fxcast/rng.hpp"

namespace fxcast {

/// Synthetic dataset with planted structure. The target is a lagged nonlinear
/// function of exactly one feature column plus AR(1) noise; the remaining
/// columns are independent AR(1) distractors.
struct SynthSpec {
    std::size_t rows = 500;
    std::size_t features = 10;
    std::uint64_t seed = 0;
    std::size_t planted_feature = 0;
    double noise_std = 0.1;
    int lag = 1;

    // process dynamics: slow planted driver, faster distractors
    double planted_phi = 0.995;
    double distractor_phi = 0.9;
    double noise_phi = 0.5;
};

/// The planted functional form: mildly nonlinear, monotone.
inline double synth_target_fn(double u) { return std::tanh(u) + 0.5 * u; }

inline Schema synth_schema(std::size_t features) {
    Schema s;
    s.columns.push_back({"rate", Frequency::daily, ColumnRole::target});
    for (std::size_t f = 0; f < features; ++f) {
        s.columns.push_back({"f" + std::to_string(f), Frequency::daily, ColumnRole::feature});
    }
    return s;
}

namespace detail {

/// Unit-variance stationary AR(1) path.
inline std::vector<double> ar1_path(Rng& rng, std::size_t n, double phi) {
    std::vector<double> z(n);
    const double innov = std::sqrt(1.0 - phi * phi);
    double prev = rng.normal();
    z[0] = prev;
    for (std::size_t t = 1; t < n; ++t) {
        prev = phi * prev + innov * rng.normal();
        z[t] = prev;
    }
    return z;
}

inline std::string iso_from_days(long days) {
    // inverse of civil_to_days (Hinnant)
    long z = days + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    const long yy = y + (m <= 2);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04ld-%02u-%02u", yy, m, d);
    return buf;
}

} // namespace detail

inline SeriesFrame synth_generate(const SynthSpec& spec) {
    if (spec.features < 1) throw ParameterError("synth_generate: need at least one feature");
    if (spec.planted_feature >= spec.features) {
        throw ParameterError("synth_generate: planted feature index " +
                             std::to_string(spec.planted_feature) + " out of range for " +
                             std::to_string(spec.features) + " features");
    }
    if (spec.rows < 2) throw ParameterError("synth_generate: need at least 2 rows");
    if (spec.lag < 0) throw ParameterError("synth_generate: lag must be >= 0");
    if (spec.noise_std < 0) throw ParameterError("synth_generate: noise_std must be >= 0");

    const std::size_t T = spec.rows;
    std::vector<Column> cols;
    std::vector<double> planted;
    for (std::size_t f = 0; f < spec.features; ++f) {
        Rng rng(mix_seed(spec.seed, f));
        const double phi = f == spec.planted_feature ? spec.planted_phi : spec.distractor_phi;
        auto z = detail::ar1_path(rng, T, phi);
        if (f == spec.planted_feature) planted = z;
        cols.push_back({"f" + std::to_string(f), std::move(z), Frequency::daily});
    }

    Rng noise_rng(mix_seed(spec.seed, 0x4e6f697365ULL)); // per-run noise stream
    const auto noise = detail::ar1_path(noise_rng, T, spec.noise_phi);
    std::vector<double> target(T);
    const auto lag = static_cast<std::size_t>(spec.lag);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t src = t >= lag ? t - lag : 0;
        target[t] = synth_target_fn(planted[src]) + spec.noise_std * noise[t];
    }
    Column tcol{"rate", std::move(target), Frequency::daily};
    cols.insert(cols.begin(), std::move(tcol));

    std::vector<std::string> timestamps;
    timestamps.reserve(T);
    const long start = civil_to_days(2015, 1, 1);
    for (std::size_t t = 0; t < T; ++t) {
        timestamps.push_back(detail::iso_from_days(start + static_cast<long>(t)));
    }
    return SeriesFrame(std::move(timestamps), std::move(cols), "rate");
}

} // namespace fxcast
