#include "recordkit/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace recordkit {

namespace {
constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// SplitMix64 finalizer.
uint64_t mix64(uint64_t x) {
    x += kGamma;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Rng::Rng(uint64_t master_seed, std::string_view tag, uint64_t instance) {
    key_ = mix64(mix64(master_seed) ^ mix64(fnv1a64(tag)) ^ mix64(instance * 0xD1342543DE82EF95ull));
}

uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    // Box-Muller; u1 kept strictly positive.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    // Lemire multiply-shift; bias below 2^-64 * n, negligible at these ranges.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<uint64_t>(m >> 64);
}

std::vector<size_t> Rng::permutation(size_t n) {
    std::vector<size_t> p(n);
    std::iota(p.begin(), p.end(), size_t{0});
    for (size_t i = n; i > 1; --i) {
        size_t j = uniform_int(i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

std::vector<int> Rng::sample_distinct(int n, int k) {
    if (k > n) throw std::invalid_argument("sample_distinct: k exceeds population");
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        size_t j = i + uniform_int(n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace recordkit
