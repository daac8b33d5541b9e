#pragma once

#include <cmath>
#include <cstdint>

namespace cfc {

// Counter-free splitmix64 generator. The whole state is one u64, which makes
// checkpoint/resume exact: serialize the state, restore it, and the stream
// continues bit-identically.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97f4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; stateless (second sample discarded)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // independent child stream (for per-identity determinism)
    static Rng child(uint64_t seed, uint64_t key) {
        Rng mix(seed ^ (0xA0761D6478BD642Full * (key + 1)));
        mix.next_u64();
        return Rng(mix.next_u64());
    }

private:
    uint64_t state_;
};

} // namespace cfc
