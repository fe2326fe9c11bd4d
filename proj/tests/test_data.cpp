#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "spae/data.hpp"

using namespace spae;

TEST_CASE("parse_strokes: canonical format") {
    auto samples = parse_strokes("7;0,0 10,10|10,0 0,10\n");
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].label == 7);
    REQUIRE(samples[0].strokes.size() == 2);
    CHECK(samples[0].strokes[0].size() == 2);
    CHECK(samples[0].strokes[0][1][0] == 10.0);
    CHECK(samples[0].strokes[1][1][1] == 10.0);
}

TEST_CASE("parse_strokes: decimal reals, comments, blank lines") {
    auto samples = parse_strokes("# comment\n\n3;0.5,1.25 2.0,3.5\n");
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].strokes[0][0][0] == 0.5);
}

TEST_CASE("parse_strokes: empty stroke segment carries a line number") {
    try {
        parse_strokes("1;0,0 1,1\n7;0,0 1,1|\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("parse_strokes: malformed point") {
    try {
        parse_strokes("1;0,0 nope\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
    }
}

TEST_CASE("stroke format round trip") {
    auto corpus = synth_digit_corpus(25, 42);
    auto back = parse_strokes(format_strokes(corpus));
    REQUIRE(back.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(back[i].label == corpus[i].label);
        REQUIRE(back[i].strokes.size() == corpus[i].strokes.size());
        for (size_t s = 0; s < corpus[i].strokes.size(); ++s) {
            for (size_t p = 0; p < corpus[i].strokes[s].size(); ++p) {
                CHECK(back[i].strokes[s][p][0] == corpus[i].strokes[s][p][0]);
                CHECK(back[i].strokes[s][p][1] == corpus[i].strokes[s][p][1]);
            }
        }
    }
}

TEST_CASE("rasterize: horizontal segment draws one cell per lattice step") {
    // anchor stroke spans the grid so the sample is drawn at scale 1; the
    // (0,0)-(3,0) segment then covers exactly 4 cells
    StrokeSample s;
    s.label = 0;
    s.strokes = {{{0, 0}, {3, 0}}, {{0, 7}, {7, 7}}};
    auto t = rasterize(s, 8);
    CHECK(t.active() == 4 + 8);
    for (int32_t x = 0; x <= 3; ++x) CHECK(t.row_of(make_coord(0, {x, 0})) >= 0);
    CHECK(t.row_of(make_coord(0, {4, 0})) < 0);
}

TEST_CASE("rasterize: single dot lands on one center cell") {
    StrokeSample s;
    s.label = 0;
    s.strokes = {{{5.0, 5.0}}};
    auto t = rasterize(s, 9);
    REQUIRE(t.active() == 1);
    CHECK(t.coords[0] == make_coord(0, {4, 4}));
}

TEST_CASE("rasterize: no points is degenerate") {
    StrokeSample s;
    try {
        rasterize(s, 8);
        FAIL("expected DegenerateSample");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateSample);
    }
}

TEST_CASE("rasterize: each stroke is an 8-connected chain") {
    auto corpus = synth_digit_corpus(15, 7);
    for (const auto& sample : corpus) {
        auto t = rasterize(sample, 32);
        std::set<std::pair<int, int>> cells;
        for (const Coord& c : t.coords) cells.insert({c.pos[0], c.pos[1]});
        // flood fill from the first cell of the union; digits may have
        // separate strokes, so check connectivity per component count <=
        // number of strokes
        int components = 0;
        std::set<std::pair<int, int>> seen;
        for (const auto& start : cells) {
            if (seen.count(start)) continue;
            ++components;
            std::vector<std::pair<int, int>> stack{start};
            seen.insert(start);
            while (!stack.empty()) {
                auto [x, y] = stack.back();
                stack.pop_back();
                for (int dx = -1; dx <= 1; ++dx) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        auto nb = std::make_pair(x + dx, y + dy);
                        if (cells.count(nb) && !seen.count(nb)) {
                            seen.insert(nb);
                            stack.push_back(nb);
                        }
                    }
                }
            }
        }
        CHECK(components <= static_cast<int>(sample.strokes.size()));
    }
}

TEST_CASE("digit corpus occupancy sits in the sparse band at 64^2") {
    auto corpus = synth_digit_corpus(60, 11);
    for (const auto& sample : corpus) {
        const double occ = occupancy(rasterize(sample, 64));
        CHECK(occ >= 0.02);
        CHECK(occ <= 0.15);
    }
}

TEST_CASE("affine: identity config returns the sample unchanged") {
    AffineConfig cfg;
    cfg.rotate_deg = 0;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.shear = 0;
    cfg.translate_frac = 0;
    auto corpus = synth_digit_corpus(3, 5);
    auto out = random_affine(corpus[0], cfg, 99);
    CHECK(out.strokes == corpus[0].strokes);
}

TEST_CASE("affine: deterministic given seed") {
    AffineConfig cfg; // defaults: rotation, scaling, translation on
    auto corpus = synth_digit_corpus(3, 6);
    auto a = random_affine(corpus[1], cfg, 1234);
    auto b = random_affine(corpus[1], cfg, 1234);
    CHECK(a.strokes == b.strokes);
    auto c = random_affine(corpus[1], cfg, 1235);
    CHECK(a.strokes != c.strokes);
}

TEST_CASE("affine: quarter-turn rotation maps a horizontal segment to a vertical one") {
    StrokeSample s;
    s.strokes = {{{-1.0, 0.0}, {1.0, 0.0}}};
    const double pi = 3.14159265358979323846;
    auto out = apply_affine(s, pi / 2, 1.0, 0.0, 0.0, 0.0);
    CHECK(out.strokes[0][0][0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.strokes[0][0][1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.strokes[0][1][0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.strokes[0][1][1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("point-cloud affine rotates the horizontal plane only") {
    PointCloudSample cloud;
    cloud.d = 3;
    cloud.points = {{1, 0, 5}, {0, 1, -2}};
    AffineConfig cfg;
    cfg.full_circle = true;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.translate_frac = 0;
    auto out = random_affine(cloud, cfg, 7);
    // vertical coordinates untouched, in-plane distances to the bbox center preserved
    CHECK(out.points[0][2] == doctest::Approx(5.0));
    CHECK(out.points[1][2] == doctest::Approx(-2.0));
    const double cx = 0.5, cy = 0.5;
    for (int p = 0; p < 2; ++p) {
        const double before = std::hypot(cloud.points[p][0] - cx, cloud.points[p][1] - cy);
        const double after = std::hypot(out.points[p][0] - cx, out.points[p][1] - cy);
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
    }
    CHECK(out.points[0][0] != cloud.points[0][0]); // it did rotate
}

TEST_CASE("voxelize basics") {
    SUBCASE("one point, one voxel") {
        PointCloudSample cloud;
        cloud.d = 3;
        cloud.points = {{0.5, 0.5, 0.5}};
        auto vr = voxelize(cloud, 1.0, 3);
        CHECK(vr.tensor.active() == 1);
        CHECK(vr.point_cell[0] == 0);
    }
    SUBCASE("features average per cell") {
        PointCloudSample cloud;
        cloud.d = 2;
        cloud.points = {{0.1, 0.1}, {0.2, 0.2}};
        cloud.features = {{0.0}, {2.0}};
        auto vr = voxelize(cloud, 1.0, 2);
        REQUIRE(vr.tensor.active() == 1);
        CHECK(vr.tensor.feats.at(0, 0) == real(1.0));
    }
    SUBCASE("empty cloud is an error") {
        PointCloudSample cloud;
        cloud.d = 2;
        try {
            voxelize(cloud, 1.0, 2);
            FAIL("expected EmptyCloud");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyCloud);
        }
    }
}

TEST_CASE("voxelize: conservation and majority labels match a scalar oracle") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::uniform_int_distribution<int> lab(0, 3);
    PointCloudSample cloud;
    cloud.d = 3;
    for (int i = 0; i < 300; ++i) {
        cloud.points.push_back({u(rng), u(rng), u(rng)});
        cloud.labels.push_back(lab(rng));
    }
    const double res = 1.5;
    auto vr = voxelize(cloud, res, 3);

    // conservation: cell point-counts sum to the cloud size
    std::map<int32_t, int> per_cell;
    for (int32_t cell : vr.point_cell) {
        CHECK(cell >= 0);
        per_cell[cell]++;
    }
    int total = 0;
    for (auto& [cell, count] : per_cell) total += count;
    CHECK(total == 300);

    // majority vote with smallest-id ties, recomputed naively
    for (auto& [cell, count] : per_cell) {
        std::map<int, int> votes;
        for (size_t p = 0; p < cloud.points.size(); ++p) {
            if (vr.point_cell[p] == cell) votes[cloud.labels[p]]++;
        }
        int best = -1, best_count = -1;
        for (auto& [label, c] : votes) {
            if (c > best_count) {
                best = label;
                best_count = c;
            }
        }
        CHECK(vr.site_labels[static_cast<size_t>(cell)] == best);
    }
}

TEST_CASE("synth_sparse: polyline, shell, random") {
    SUBCASE("polyline cells are active and labeled") {
        auto s = synth_sparse(2, 16, SynthStyle::Polyline, 3, 0.1);
        CHECK(s.tensor.active() >= 16 * 16 / 10);
        CHECK(s.site_labels.size() == static_cast<size_t>(s.tensor.active()));
    }
    SUBCASE("shells are hollow") {
        auto s = synth_sparse(3, 12, SynthStyle::Shell, 4, 0.05);
        CHECK(s.tensor.active() > 0);
    }
    SUBCASE("Bernoulli p=0 gives an empty tensor") {
        auto s = synth_sparse(2, 16, SynthStyle::Random, 5, 0.0);
        CHECK(s.tensor.active() == 0);
    }
    SUBCASE("Bernoulli occupancy within 3 sigma") {
        const double p = 0.2;
        const int size = 64;
        auto s = synth_sparse(2, size, SynthStyle::Random, 6, p);
        const double n = static_cast<double>(size) * size;
        const double sigma = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(occupancy(s.tensor) - p) <= 3 * sigma);
    }
    SUBCASE("deterministic given seed") {
        auto a = synth_sparse(3, 10, SynthStyle::Polyline, 9, 0.1);
        auto b = synth_sparse(3, 10, SynthStyle::Polyline, 9, 0.1);
        CHECK(a.tensor.coords == b.tensor.coords);
        CHECK(a.site_labels == b.site_labels);
    }
}

TEST_CASE("pendigits conversion") {
    const char* fixture =
        "47,100,27,81,57,37,26,0,0,23,56,53,100,90,40,98,8\n"
        "0,89,27,100,42,75,29,45,15,15,37,0,69,2,100,6,2\n";
    auto samples = convert_pendigits(fixture);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].label == 8);
    CHECK(samples[1].label == 2);
    REQUIRE(samples[0].strokes.size() == 1);
    CHECK(samples[0].strokes[0].size() == 8);
    CHECK(samples[0].strokes[0][0][0] == 47.0);

    // official corpus counts, when the UCI files are available locally
    const char* dir = std::getenv("SPAE_PENDIGITS_DIR");
    if (dir != nullptr) {
        auto slurp = [](const std::string& p) {
            std::ifstream is(p);
            REQUIRE(is.good());
            return std::string((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
        };
        CHECK(convert_pendigits(slurp(std::string(dir) + "/pendigits.tra")).size() == 7494);
        CHECK(convert_pendigits(slurp(std::string(dir) + "/pendigits.tes")).size() == 3498);
    }
}

TEST_CASE("point-cloud text format round trip") {
    PointCloudSample cloud;
    cloud.d = 3;
    cloud.points = {{0.25, -1.5, 3.0}, {2.0, 2.0, 2.0}};
    cloud.features = {{1.0, 0.5}, {-2.0, 0.125}};
    cloud.labels = {4, -1};
    auto back = parse_pointcloud(format_pointcloud(cloud));
    CHECK(back.d == 3);
    CHECK(back.points == cloud.points);
    CHECK(back.features == cloud.features);
    CHECK(back.labels == cloud.labels);

    try {
        parse_pointcloud("nonsense");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
    }
}

TEST_CASE("digit corpus is balanced and deterministic") {
    auto a = synth_digit_corpus(40, 77);
    auto b = synth_digit_corpus(40, 77);
    CHECK(format_strokes(a) == format_strokes(b));
    std::map<int, int> hist;
    for (const auto& s : a) hist[s.label]++;
    CHECK(hist.size() == 10);
    for (auto& [label, count] : hist) CHECK(count == 4);
}
