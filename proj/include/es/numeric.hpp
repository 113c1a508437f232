#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace es {

// Softmax with max-subtraction. Shift-invariant, overflow-safe.
std::vector<double> softmax(std::span<const double> logits);

// Neumaier compensated accumulator. Keeps long-running sums accurate enough
// that the profiler's aggregation identities hold at 1e-12.
class NeumaierSum {
public:
    void add(double v) {
        double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Shortest round-trip decimal representation. Used everywhere a double ends
// up in a report file so that identical values serialize identically.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

// FNV-1a 64-bit. Pins asset and parameter checksums.
inline uint64_t fnv1a64(const void* data, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace es
