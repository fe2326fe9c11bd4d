#ifndef SPAE_COORD_HPP
#define SPAE_COORD_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "spae/common.hpp"

namespace spae {

constexpr int kMaxDim = 4;

// Active-site key: batch index folded in front of the d lattice positions so
// one rulebook pass serves a whole minibatch. Only the first d entries of
// pos are meaningful; the rest stay zero so comparison/hashing can treat the
// struct uniformly.
struct Coord {
    int32_t batch = 0;
    std::array<int32_t, kMaxDim> pos{};

    Coord() = default;
    Coord(int32_t b, std::array<int32_t, kMaxDim> p) : batch(b), pos(p) {}

    friend bool operator==(const Coord& a, const Coord& b) {
        return a.batch == b.batch && a.pos == b.pos;
    }
    // Lexicographic (batch, pos): the canonical ordering of every active set.
    friend bool operator<(const Coord& a, const Coord& b) {
        if (a.batch != b.batch) return a.batch < b.batch;
        return a.pos < b.pos;
    }
};

struct CoordHash {
    size_t operator()(const Coord& c) const {
        uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<uint64_t>(c.batch);
        for (int i = 0; i < kMaxDim; ++i) {
            h ^= static_cast<uint64_t>(static_cast<uint32_t>(c.pos[i])) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return static_cast<size_t>(h);
    }
};

inline Coord make_coord(int32_t batch, std::initializer_list<int32_t> p) {
    Coord c;
    c.batch = batch;
    int i = 0;
    for (int32_t x : p) c.pos[i++] = x;
    return c;
}

inline std::string coord_str(const Coord& c, int d) {
    std::string s = "(b" + std::to_string(c.batch);
    for (int i = 0; i < d; ++i) s += "," + std::to_string(c.pos[i]);
    return s + ")";
}

} // namespace spae

#endif
