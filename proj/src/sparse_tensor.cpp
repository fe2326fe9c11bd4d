#include "spae/sparse_tensor.hpp"

#include <algorithm>
#include <numeric>

namespace spae {

namespace {

void validate_dims(int d, const std::array<int32_t, kMaxDim>& size) {
    check(d >= 2 && d <= kMaxDim, ErrorCode::DimensionMismatch,
          "dimension must be in [2,4], got " + std::to_string(d));
    for (int i = 0; i < d; ++i) {
        check(size[i] > 0, ErrorCode::DimensionMismatch,
              "spatial size must be positive in every dimension");
    }
}

} // namespace

SparseTensor build_sparse(int d, const std::array<int32_t, kMaxDim>& size, int channels,
                          const std::vector<std::pair<Coord, std::vector<real>>>& sites,
                          int batch_count) {
    validate_dims(d, size);
    check(channels > 0, ErrorCode::DimensionMismatch, "channels must be positive");

    SparseTensor t;
    t.d = d;
    t.size = size;
    t.channels = channels;

    std::vector<int32_t> order(sites.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return sites[a].first < sites[b].first;
    });

    t.coords.reserve(sites.size());
    t.feats = Matrix(static_cast<int64_t>(sites.size()), channels);
    int32_t row = 0;
    int32_t max_batch = -1;
    for (int32_t src : order) {
        const Coord& c = sites[src].first;
        const auto& fr = sites[src].second;
        check(t.in_bounds(c), ErrorCode::OutOfRange, "site " + coord_str(c, d) + " outside lattice");
        check(static_cast<int>(fr.size()) == channels, ErrorCode::DimensionMismatch,
              "feature row length != channels at " + coord_str(c, d));
        if (!t.coords.empty() && t.coords.back() == c) {
            fail(ErrorCode::DuplicateSite, "duplicate site " + coord_str(c, d));
        }
        t.coords.push_back(c);
        std::copy(fr.begin(), fr.end(), t.feats.row(row));
        t.index.emplace(c, row);
        max_batch = std::max(max_batch, c.batch);
        ++row;
    }
    t.batch_count = batch_count > 0 ? batch_count : std::max(1, max_batch + 1);
    check(max_batch < t.batch_count, ErrorCode::OutOfRange, "batch index exceeds batch count");
    return t;
}

SparseTensor build_sparse_pattern(int d, const std::array<int32_t, kMaxDim>& size, int channels,
                                  const std::vector<Coord>& coords, int batch_count) {
    validate_dims(d, size);
    SparseTensor t;
    t.d = d;
    t.size = size;
    t.channels = channels;
    t.coords = coords;
    std::sort(t.coords.begin(), t.coords.end());
    int32_t max_batch = -1;
    for (size_t i = 0; i < t.coords.size(); ++i) {
        const Coord& c = t.coords[i];
        check(t.in_bounds(c), ErrorCode::OutOfRange, "site " + coord_str(c, d) + " outside lattice");
        if (i > 0 && t.coords[i - 1] == c) {
            fail(ErrorCode::DuplicateSite, "duplicate site " + coord_str(c, d));
        }
        t.index.emplace(c, static_cast<int32_t>(i));
        max_batch = std::max(max_batch, c.batch);
    }
    t.feats = Matrix(static_cast<int64_t>(t.coords.size()), channels);
    t.batch_count = batch_count > 0 ? batch_count : std::max(1, max_batch + 1);
    check(max_batch < t.batch_count, ErrorCode::OutOfRange, "batch index exceeds batch count");
    return t;
}

DenseTensor to_dense(const SparseTensor& t, int64_t guard) {
    DenseTensor x;
    x.d = t.d;
    x.batch_count = t.batch_count;
    x.size = t.size;
    x.channels = t.channels;
    int64_t scalars = static_cast<int64_t>(t.batch_count) * t.channels * t.volume();
    check(scalars <= guard, ErrorCode::TooLarge,
          "dense materialization of " + std::to_string(scalars) + " scalars exceeds guard");
    x.values.assign(static_cast<size_t>(scalars), real(0));
    for (int64_t r = 0; r < t.active(); ++r) {
        const Coord& c = t.coords[r];
        for (int ch = 0; ch < t.channels; ++ch) {
            x.at(c.batch, ch, c.pos) = t.feats.at(r, ch);
        }
    }
    return x;
}

SparseTensor from_dense(const DenseTensor& x) {
    std::vector<std::pair<Coord, std::vector<real>>> sites;
    std::array<int32_t, kMaxDim> pos{};
    for (int32_t b = 0; b < x.batch_count; ++b) {
        pos.fill(0);
        while (true) {
            std::vector<real> row(x.channels);
            bool any = false;
            for (int ch = 0; ch < x.channels; ++ch) {
                row[ch] = x.at(b, ch, pos);
                any = any || row[ch] != real(0);
            }
            if (any) sites.emplace_back(Coord(b, pos), std::move(row));
            // odometer over the d spatial dimensions
            int i = x.d - 1;
            for (; i >= 0; --i) {
                if (++pos[i] < x.size[i]) break;
                pos[i] = 0;
            }
            if (i < 0) break;
        }
    }
    return build_sparse(x.d, x.size, x.channels, sites, x.batch_count);
}

double occupancy(const SparseTensor& t) {
    return static_cast<double>(t.active()) /
           (static_cast<double>(t.batch_count) * static_cast<double>(t.volume()));
}

} // namespace spae
