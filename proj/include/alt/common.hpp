#ifndef ALT_COMMON_HPP
#define ALT_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace alt {

// Error taxonomy. The CLI maps these onto exit codes:
//   validation/parameter/shape/contract/parse -> 1
//   integrity/io                              -> 2
//   numeric (NaN/Inf, undefined cosine)       -> 3
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};
struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& m) : std::runtime_error(m) {}
};
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

uint64_t fnv1a64(std::string_view bytes);
uint64_t splitmix64(uint64_t x);

// Deterministic random stream with a counted number of raw draws, so its
// state can be serialized as (seed, uses) and restored exactly.
// Distributions are generated from explicit formulas on top of the raw
// mt19937_64 output; nothing implementation-defined is used.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : seed_(seed), engine_(seed) {}

    // Independent child stream derived from a parent seed and a tag.
    static RngStream substream(uint64_t master_seed, std::string_view tag) {
        return RngStream(splitmix64(master_seed ^ fnv1a64(tag)));
    }

    uint64_t raw() {
        ++uses_;
        return engine_();
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1), never returning 0 (safe under log()).
    double uniform_open() {
        return (static_cast<double>(raw() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal();  // Box-Muller, consumes two raws
    double gumbel();  // standard Gumbel(0,1), consumes one raw

    // index in [0, n)
    uint64_t below(uint64_t n);

    uint64_t seed() const { return seed_; }
    uint64_t uses() const { return uses_; }

    void restore(uint64_t seed, uint64_t uses) {
        seed_ = seed;
        engine_.seed(seed);
        engine_.discard(uses);
        uses_ = uses;
    }

private:
    uint64_t seed_;
    uint64_t uses_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace alt

#endif
