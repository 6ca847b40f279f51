#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace glass {

// Seedable random stream with portable draws. std::mt19937_64 state advances
// are standardized; the uniform/normal transforms below avoid the
// implementation-defined std::*_distribution classes so that identical seeds
// produce identical streams on every platform.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. One engine draw pair per sample; the
    // second Box-Muller output is discarded so the stream state is exactly
    // the engine state (no cached spare to serialize).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, bound) by rejection.
    uint64_t integer(uint64_t bound) {
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % bound;
        uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % bound;
    }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

// Fisher-Yates shuffle driven by Rng::integer, fixed visitation order.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.integer(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace glass
