#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qnd {

/// splitmix64 mixing round; used only to derive substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based substream seeding: one independent stream per
/// (trajectory, channel) pair, reproducible and order-free.
inline std::uint64_t deriveSeed(std::uint64_t base, std::uint64_t trajectory,
                                std::uint64_t channel) {
    std::uint64_t s = base;
    s ^= splitmix64(trajectory) + 0x165667b19e3779f9ULL * (trajectory + 1);
    s += 0x27d4eb2f165667c5ULL * (channel + 1);
    std::uint64_t t = s;
    splitmix64(t);
    return splitmix64(t);
}

/// A single noise stream. Wraps mt19937_64 with the draw kinds the
/// integrators need. Each stream belongs to exactly one channel.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    /// Standard normal draw.
    double gaussian() { return normal_(engine_); }

    /// Uniform draw on [0,1).
    double uniform() { return uniform_(engine_); }

    /// Exponential draw with the given rate (mean 1/rate).
    double exponential(double rate) {
        return -std::log1p(-uniform_(engine_)) / rate;
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// The per-trajectory bundle: stream i drives channel i.
class ChannelStreams {
public:
    ChannelStreams(std::uint64_t baseSeed, std::uint64_t trajectory, std::size_t channels) {
        streams_.reserve(channels);
        for (std::size_t i = 0; i < channels; ++i)
            streams_.emplace_back(deriveSeed(baseSeed, trajectory, i));
    }

    RngStream& operator[](std::size_t channel) { return streams_[channel]; }
    std::size_t size() const { return streams_.size(); }

private:
    std::vector<RngStream> streams_;
};

}  // namespace qnd
