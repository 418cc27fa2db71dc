#pragma once

#include <cstdint>
#include <random>

namespace voltmargin {

/// Reproducible Gaussian stream identified by (seed_base, stream_id).
///
/// The engine is std::mt19937_64 seeded through std::seed_seq with the four
/// 32-bit halves of the two identifiers, so distinct stream ids give
/// statistically independent sequences and results do not depend on which
/// thread draws from which stream. Normal variates use the Marsaglia polar
/// method over 53-bit uniforms; the cached second variate is part of the
/// stream state. Both pieces are spelled out here rather than delegated to
/// std::normal_distribution so paths are identical across standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed_base, std::uint64_t stream_id);

    std::uint64_t seed_base() const { return seed_base_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Uniform on the open interval (0, 1).
    double uniform();

    /// Standard normal N(0, 1).
    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Child stream for a sub-task; deterministic in (this stream's ids, index).
    RngStream split(std::uint64_t index) const;

private:
    std::uint64_t seed_base_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Packs a grid cell and a path index into a stream id.
constexpr std::uint64_t make_stream_id(std::uint64_t cell, std::uint64_t path) {
    return (cell << 32) ^ (path & 0xffffffffULL);
}

}  // namespace voltmargin
