#include "rviq/rng.hpp"

namespace rviq {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

Xoshiro256::result_type Xoshiro256::next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

std::size_t Xoshiro256::below(std::size_t n) {
    if (n == 0) return 0;
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return static_cast<std::size_t>(v % bound);
}

namespace {

void apply_jump(std::uint64_t (&s)[4], const std::uint64_t (&table)[4], Xoshiro256& gen) {
    std::uint64_t acc[4] = {0, 0, 0, 0};
    for (std::uint64_t word : table) {
        for (int b = 0; b < 64; ++b) {
            if (word & (std::uint64_t{1} << b)) {
                for (int i = 0; i < 4; ++i) acc[i] ^= s[i];
            }
            gen.next();
        }
    }
    for (int i = 0; i < 4; ++i) s[i] = acc[i];
}

}  // namespace

void Xoshiro256::jump() {
    static constexpr std::uint64_t table[4] = {0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
                                               0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
    apply_jump(s_, table, *this);
}

void Xoshiro256::long_jump() {
    static constexpr std::uint64_t table[4] = {0x76e15d3efefdcbbfULL, 0xc5004e441c522fb3ULL,
                                               0x77710069854ee241ULL, 0x39109bb02acbe635ULL};
    apply_jump(s_, table, *this);
}

bool Xoshiro256::operator==(const Xoshiro256& other) const {
    for (int i = 0; i < 4; ++i)
        if (s_[i] != other.s_[i]) return false;
    return true;
}

Xoshiro256 substream(std::uint64_t seed, StreamPurpose purpose, std::size_t component) {
    Xoshiro256 gen(seed);
    for (std::uint32_t p = 0; p < static_cast<std::uint32_t>(purpose); ++p) gen.long_jump();
    for (std::size_t c = 0; c < component; ++c) gen.jump();
    return gen;
}

}  // namespace rviq
