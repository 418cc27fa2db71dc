#include "voltmargin/rng.hpp"

#include <cmath>

namespace voltmargin {

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed_base, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_base & 0xffffffffu),
                      static_cast<std::uint32_t>(seed_base >> 32),
                      static_cast<std::uint32_t>(stream_id & 0xffffffffu),
                      static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed_base, std::uint64_t stream_id)
    : seed_base_(seed_base), stream_id_(stream_id), engine_(seeded_engine(seed_base, stream_id)) {}

double RngStream::uniform() {
    for (;;) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
    }
}

double RngStream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * factor;
    has_cached_ = true;
    return u * factor;
}

std::uint64_t RngStream::below(std::uint64_t n) {
    // Reject the top partial block so the modulo is unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    for (;;) {
        const std::uint64_t r = engine_();
        if (r < limit) return r % n;
    }
}

RngStream RngStream::split(std::uint64_t index) const {
    // Mix the parent ids so children of different parents do not collide.
    std::uint64_t mixed = stream_id_ * 0x9e3779b97f4a7c15ULL + index + 0x632be59bd9b4e019ULL;
    mixed ^= mixed >> 31;
    return RngStream(seed_base_ ^ 0xd1b54a32d192ed03ULL, mixed);
}

}  // namespace voltmargin
