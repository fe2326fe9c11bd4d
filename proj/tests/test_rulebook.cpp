#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "oracle.hpp"
#include "spae/rulebook.hpp"

using namespace spae;

namespace {

std::array<int32_t, kMaxDim> sq(int d, int32_t n) {
    std::array<int32_t, kMaxDim> s{};
    for (int i = 0; i < d; ++i) s[i] = n;
    return s;
}

SparseTensor pattern_tensor(int d, int32_t size, const std::vector<Coord>& coords) {
    return build_sparse_pattern(d, sq(d, size), 1, coords);
}

} // namespace

TEST_CASE("SC f=s=2: floor-by-2 activation map") {
    auto in = pattern_tensor(2, 4, {make_coord(0, {0, 0}), make_coord(0, {1, 1}), make_coord(0, {3, 2})});
    auto rb = build_sc_rulebook(in, 2, 2);
    CHECK(rb.out_coords == std::vector<Coord>{make_coord(0, {0, 0}), make_coord(0, {1, 1})});
    CHECK(rb.out_size[0] == 2);
    CHECK(rb.rule_count() == 3); // one window per input site when f == s
}

TEST_CASE("SC f=4 s=1 collapses a 4^d grid to one site") {
    auto in = pattern_tensor(2, 4, {make_coord(0, {2, 3}), make_coord(0, {0, 1})});
    auto rb = build_sc_rulebook(in, 4, 1);
    CHECK(rb.out_coords == std::vector<Coord>{make_coord(0, {0, 0})});
    CHECK(rb.out_size[0] == 1);
    CHECK(rb.rule_count() == 2);
}

TEST_CASE("SC: empty input gives empty rulebook and output") {
    auto in = pattern_tensor(2, 4, {});
    auto rb = build_sc_rulebook(in, 2, 2);
    CHECK(rb.out_coords.empty());
    CHECK(rb.rule_count() == 0);
}

TEST_CASE("SC f=s=2 rejects odd sizes") {
    auto in = pattern_tensor(2, 5, {make_coord(0, {0, 0})});
    try {
        build_sc_rulebook(in, 2, 2);
        FAIL("expected BadGeometry");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadGeometry);
    }
}

TEST_CASE("SSC: isolated site sees only itself") {
    auto in = pattern_tensor(2, 8, {make_coord(0, {3, 3})});
    auto rb = build_ssc_rulebook(in, 3);
    CHECK(rb.rule_count() == 1);
    // the center offset of the 3x3 lexicographic enumeration is index 4
    CHECK(rb.rules[4].size() == 1);
}

TEST_CASE("SSC: two adjacent sites give 4 rule pairs") {
    auto in = pattern_tensor(2, 8, {make_coord(0, {0, 0}), make_coord(0, {0, 1})});
    auto rb = build_ssc_rulebook(in, 3);
    CHECK(rb.rule_count() == 4);
}

TEST_CASE("SSC preserves the active set for any input") {
    std::mt19937_64 rng(3);
    for (int d = 2; d <= 4; ++d) {
        for (int trial = 0; trial < 8; ++trial) {
            auto in = oracle::random_sparse(rng, d, d == 4 ? 4 : 8, 1, 0.2, 2);
            auto rb = build_ssc_rulebook(in, 3);
            CHECK(rb.out_coords == in.coords);
        }
    }
}

TEST_CASE("SSC rejects even filters") {
    auto in = pattern_tensor(2, 4, {make_coord(0, {0, 0})});
    try {
        build_ssc_rulebook(in, 2);
        FAIL("expected EvenFilter");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EvenFilter);
    }
}

TEST_CASE("TC: output size rule s*(N-1)+f") {
    auto in = pattern_tensor(2, 8, {make_coord(0, {0, 0})});
    CHECK(build_tc_rulebook(in, 2, 2).out_size[0] == 16);
    auto one = pattern_tensor(2, 1, {make_coord(0, {0, 0})});
    CHECK(build_tc_rulebook(one, 4, 1).out_size[0] == 4);
}

TEST_CASE("TC: children of an active site") {
    auto in = pattern_tensor(2, 2, {make_coord(0, {1, 1})});
    auto rb = build_tc_rulebook(in, 2, 2);
    CHECK(rb.out_coords == std::vector<Coord>{make_coord(0, {2, 2}), make_coord(0, {2, 3}),
                                              make_coord(0, {3, 2}), make_coord(0, {3, 3})});
}

TEST_CASE("pattern algebra: downsample(upsample(Q)) == Q") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 2 + trial % 3;
        const int size = d == 4 ? 4 : 8;
        auto q = oracle::random_pattern(rng, d, size, 0.25, 2);
        auto qt = build_sparse_pattern(d, sq(d, size), 1, q);
        auto up = build_tc_rulebook(qt, 2, 2);
        auto upt = build_sparse_pattern(d, up.out_size, 1, up.out_coords);
        auto down = build_sc_rulebook(upt, 2, 2);
        CHECK(down.out_coords == qt.coords);
    }
}

TEST_CASE("SC activation map equals the floor(x/2) image") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 2 + trial % 3;
        const int size = d == 4 ? 4 : 8;
        auto in = oracle::random_sparse(rng, d, size, 1, 0.3, 2);
        auto rb = build_sc_rulebook(in, 2, 2);
        std::set<Coord> expected;
        for (Coord c : in.coords) {
            for (int i = 0; i < d; ++i) c.pos[i] /= 2;
            expected.insert(c);
        }
        CHECK(std::vector<Coord>(expected.begin(), expected.end()) == rb.out_coords);
    }
}

TEST_CASE("DC is the exact transpose of the matching SC") {
    std::mt19937_64 rng(29);
    auto in = oracle::random_sparse(rng, 3, 8, 1, 0.15, 2);
    auto sc = build_sc_rulebook(in, 2, 2);
    auto dc = build_dc_rulebook(sc);
    CHECK(dc.out_coords == sc.in_coords);
    CHECK(dc.in_coords == sc.out_coords);
    CHECK(dc.rule_count() == sc.rule_count());
    // every (x,y) SC rule appears swapped under the same offset
    for (int o = 0; o < sc.offset_count(); ++o) {
        std::set<std::pair<int32_t, int32_t>> swapped;
        for (const Rule& r : sc.rules[o]) swapped.insert({r.out_row, r.in_row});
        for (const Rule& r : dc.rules[o]) {
            CHECK(swapped.count({r.in_row, r.out_row}) == 1);
        }
    }
}

TEST_CASE("rule lists are sorted and duplicate-free under every offset") {
    std::mt19937_64 rng(31);
    auto in = oracle::random_sparse(rng, 2, 8, 1, 0.4, 3);
    for (const Rulebook& rb :
         {build_sc_rulebook(in, 2, 2), build_ssc_rulebook(in, 3), build_tc_rulebook(in, 2, 2)}) {
        for (const auto& list : rb.rules) {
            for (size_t i = 1; i < list.size(); ++i) {
                const bool ordered = list[i - 1].out_row < list[i].out_row ||
                                     (list[i - 1].out_row == list[i].out_row &&
                                      list[i - 1].in_row < list[i].in_row);
                CHECK(ordered);
            }
        }
    }
}

TEST_CASE("plans group every rule by row") {
    std::mt19937_64 rng(37);
    auto in = oracle::random_sparse(rng, 2, 8, 1, 0.3, 1);
    auto rb = build_ssc_rulebook(in, 3);
    auto gather = make_gather_plan(rb, static_cast<int64_t>(rb.out_coords.size()));
    auto scatter = make_scatter_plan(rb, in.active());
    CHECK(gather.row_ptr.back() == rb.rule_count());
    CHECK(scatter.row_ptr.back() == rb.rule_count());
}
