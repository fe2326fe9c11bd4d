#ifndef SPAE_SPARSE_TENSOR_HPP
#define SPAE_SPARSE_TENSOR_HPP

#include <array>
#include <unordered_map>
#include <vector>

#include "spae/common.hpp"
#include "spae/coord.hpp"

namespace spae {

/// Dimension-generic (d = 2..4) spatially-sparse tensor: a canonically
/// sorted list of active coordinates plus one contiguous feature row per
/// site. Immutable once built; share freely across readers.
struct SparseTensor {
    int d = 0;
    int batch_count = 1;
    std::array<int32_t, kMaxDim> size{}; // spatial extent per dimension
    int channels = 0;
    std::vector<Coord> coords; // sorted lexicographically by (batch, pos)
    Matrix feats;              // #active x channels
    std::unordered_map<Coord, int32_t, CoordHash> index;

    int64_t active() const { return static_cast<int64_t>(coords.size()); }

    int64_t volume() const {
        int64_t v = 1;
        for (int i = 0; i < d; ++i) v *= size[i];
        return v;
    }

    int32_t row_of(const Coord& c) const {
        auto it = index.find(c);
        return it == index.end() ? -1 : it->second;
    }

    bool in_bounds(const Coord& c) const {
        if (c.batch < 0) return false;
        for (int i = 0; i < d; ++i) {
            if (c.pos[i] < 0 || c.pos[i] >= size[i]) return false;
        }
        return true;
    }
};

// Dense counterpart, used as test oracle and for small exports.
// values laid out as [batch][channel][spatial...] row-major.
struct DenseTensor {
    int d = 0;
    int batch_count = 1;
    std::array<int32_t, kMaxDim> size{};
    int channels = 0;
    std::vector<real> values;

    int64_t volume() const {
        int64_t v = 1;
        for (int i = 0; i < d; ++i) v *= size[i];
        return v;
    }
    int64_t spatial_offset(const std::array<int32_t, kMaxDim>& pos) const {
        int64_t off = 0;
        for (int i = 0; i < d; ++i) off = off * size[i] + pos[i];
        return off;
    }
    real& at(int32_t batch, int ch, const std::array<int32_t, kMaxDim>& pos) {
        return values[(static_cast<int64_t>(batch) * channels + ch) * volume() + spatial_offset(pos)];
    }
    real at(int32_t batch, int ch, const std::array<int32_t, kMaxDim>& pos) const {
        return values[(static_cast<int64_t>(batch) * channels + ch) * volume() + spatial_offset(pos)];
    }
};

/// Builds a tensor from (coordinate, feature-row) sites. Rejects duplicates
/// and out-of-range coordinates; the result is canonically sorted no matter
/// the insertion order.
SparseTensor build_sparse(int d, const std::array<int32_t, kMaxDim>& size, int channels,
                          const std::vector<std::pair<Coord, std::vector<real>>>& sites,
                          int batch_count = -1);

/// Structure-only variant: sites become active with all-zero feature rows.
SparseTensor build_sparse_pattern(int d, const std::array<int32_t, kMaxDim>& size, int channels,
                                  const std::vector<Coord>& coords, int batch_count = -1);

// guard threshold for dense materialization, in scalars
constexpr int64_t kDenseGuard = 100000000;

DenseTensor to_dense(const SparseTensor& t, int64_t guard = kDenseGuard);
SparseTensor from_dense(const DenseTensor& x);

double occupancy(const SparseTensor& t);

} // namespace spae

#endif
