#ifndef SPAE_RULEBOOK_HPP
#define SPAE_RULEBOOK_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "spae/sparse_tensor.hpp"

namespace spae {

// A single gather/scatter instruction: feature row x of the input
// contributes to feature row y of the output through one kernel offset.
struct Rule {
    int32_t in_row;
    int32_t out_row;
};

/// Per-kernel-offset lists of (input-row, output-row) pairs plus the output
/// active set. Offsets are enumerated lexicographically; SC/TC/DC offsets
/// range over [0,f)^d, SSC offsets over [-(f-1)/2,(f-1)/2]^d. Rule lists are
/// sorted by (out_row, in_row) so execution order never depends on how the
/// book was assembled.
struct Rulebook {
    int d = 0;
    int f = 0;
    int s = 1;
    std::vector<std::vector<Rule>> rules; // one list per kernel offset
    std::vector<Coord> in_coords;         // the input active set the book was built from
    std::vector<Coord> out_coords;        // canonical ordering
    std::array<int32_t, kMaxDim> in_size{};
    std::array<int32_t, kMaxDim> out_size{};
    int in_batch = 1;

    int offset_count() const { return static_cast<int>(rules.size()); }
    int64_t rule_count() const {
        int64_t n = 0;
        for (const auto& r : rules) n += static_cast<int64_t>(r.size());
        return n;
    }
};

// Execution plans grouping rules by row so each output (or input) row is
// accumulated serially in a fixed order by exactly one thread. This is what
// makes the parallel kernels bit-identical to the serial reference.
struct GatherPlan {
    std::vector<int64_t> row_ptr;             // out_rows + 1
    std::vector<std::pair<int32_t, int32_t>> items; // (offset, in_row)
};
struct ScatterPlan {
    std::vector<int64_t> row_ptr;             // in_rows + 1
    std::vector<std::pair<int32_t, int32_t>> items; // (offset, out_row)
};

GatherPlan make_gather_plan(const Rulebook& rb, int64_t out_rows);
ScatterPlan make_scatter_plan(const Rulebook& rb, int64_t in_rows);

/// Greedy strided convolution geometry: output size_i = (size_i - f)/s + 1;
/// output y is active iff some active x lies in the window s*y + [0,f)^d.
/// For f == s the sizes must divide so the activation map is exactly
/// floor(x/s).
Rulebook build_sc_rulebook(const SparseTensor& in, int f, int s);

/// Submanifold convolution: stride 1, odd centered filter, output active set
/// identical to the input's (same order).
Rulebook build_ssc_rulebook(const SparseTensor& in, int f);

/// Greedy transpose convolution: output size_i = s*(N-1) + f (the geometric
/// inverse of SC); every active input activates its full f^d child window.
Rulebook build_tc_rulebook(const SparseTensor& in, int f, int s);

/// Deconvolution: the transpose of a stored SC rulebook. Restores exactly
/// the SC layer's input pattern.
Rulebook build_dc_rulebook(const Rulebook& matching_sc);

// Pattern-level helpers shared by rulebook construction and the models
// module (the active-set maps are weight-independent).
std::array<int32_t, kMaxDim> sc_output_size(const std::array<int32_t, kMaxDim>& in, int d, int f, int s);
std::array<int32_t, kMaxDim> tc_output_size(const std::array<int32_t, kMaxDim>& in, int d, int f, int s);

} // namespace spae

#endif
