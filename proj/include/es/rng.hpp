#pragma once

#include <cmath>
#include <cstdint>

namespace es {

// Stateless splitmix64 finalizer. Used to derive decorrelated seeds from ids.
inline uint64_t splitmix64_mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// seed_mix(seed_mix(base, a), b) gives a stable stream id for a (layer, token)
// pair, independent of evaluation order.
inline uint64_t seed_mix(uint64_t a, uint64_t b) {
    return splitmix64_mix(splitmix64_mix(a) ^ b);
}

// Counter-free splitmix64 stream. Every operation is a pure function of the
// state, so outputs depend only on (seed, call sequence), never on scheduling.
// uniform01() draws are counted; the count is the exact number of random
// variates consumed, which the bench module asserts against.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0, 1); both endpoints excluded so that
    // log(-log(u)) is always finite.
    double uniform01() {
        ++draws_;
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard Gumbel(0, 1) variate.
    double gumbel() { return -std::log(-std::log(uniform01())); }

    // Derived stream for `id`, decorrelated from this one. Does not advance
    // or consume from the parent.
    Rng substream(uint64_t id) const { return Rng(seed_mix(state_, id)); }

    uint64_t draw_count() const { return draws_; }

private:
    uint64_t state_;
    uint64_t draws_ = 0;
};

}  // namespace es
