#pragma once

#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace recordkit {

uint64_t fnv1a64(std::string_view s);
uint64_t mix64(uint64_t x);

// Counter-based stream: draw i is a pure function of (master seed, tag,
// instance, i), so adding one component never perturbs another's stream.
class Rng {
public:
    Rng(uint64_t master_seed, std::string_view tag, uint64_t instance = 0);

    uint64_t next_u64();
    double uniform();      // [0, 1)
    double gaussian();     // N(0, 1); consumes two raw draws
    uint64_t uniform_int(uint64_t n);  // [0, n)

    std::vector<size_t> permutation(size_t n);
    // k distinct values from [0, n), order randomized.
    std::vector<int> sample_distinct(int n, int k);

    uint64_t key() const { return key_; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace recordkit
