#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "oracle.hpp"
#include "spae/autograd.hpp"
#include "spae/metrics.hpp"
#include "spae/models.hpp"

using namespace spae;

namespace {

NetworkSpec fig1_spec(int d, int k) {
    NetworkSpec spec;
    spec.d = d;
    spec.k = k;
    spec.scales = 3;
    spec.mode = LatentMode::ToPoint;
    spec.in_channels = 1;
    return spec;
}

struct Row {
    const char* layer;
    int in_ch, in_size, out_ch, out_size;
};

void expect_rows(const std::vector<LayerSummaryRow>& got, const std::vector<Row>& want) {
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(got[i].layer == want[i].layer);
        CHECK(got[i].in_ch == want[i].in_ch);
        CHECK(got[i].in_size == want[i].in_size);
        CHECK(got[i].out_ch == want[i].out_ch);
        CHECK(got[i].out_size == want[i].out_size);
    }
}

} // namespace

TEST_CASE("encoder/decoder/nonconvnet size arithmetic for the 16^d family") {
    for (int d = 2; d <= 4; ++d) {
        const int k = 3; // arbitrary base width; the table scales with it
        NetworkSpec spec = fig1_spec(d, k);

        expect_rows(encoder_summary(spec, 16),
                    {{"Linear", 1, 16, k, 16},
                     {"SSC", k, 16, k, 16},
                     {"SC", k, 16, 2 * k, 8},
                     {"SSC", 2 * k, 8, 2 * k, 8},
                     {"SC", 2 * k, 8, 4 * k, 4},
                     {"SSC", 4 * k, 4, 4 * k, 4},
                     {"SC", 4 * k, 4, 16 * k, 1}});

        expect_rows(decoder_summary(spec, 16),
                    {{"TC", 16 * k, 1, 4 * k, 4},
                     {"SSC", 4 * k, 4, 4 * k, 4},
                     {"Sparsify", 4 * k, 4, 4 * k, 4},
                     {"SSC", 4 * k, 4, 4 * k, 4},
                     {"TC", 4 * k, 4, 2 * k, 8},
                     {"SSC", 2 * k, 8, 2 * k, 8},
                     {"Sparsify", 2 * k, 8, 2 * k, 8},
                     {"SSC", 2 * k, 8, 2 * k, 8},
                     {"TC", 2 * k, 8, k, 16},
                     {"SSC", k, 16, k, 16},
                     {"Sparsify", k, 16, k, 16},
                     {"SSC", k, 16, k, 16},
                     {"Linear", k, 16, 1, 16}});

        expect_rows(nonconvnet_summary(spec, 16),
                    {{"DC", 16 * k, 1, 4 * k, 4},
                     {"DC", 4 * k, 4, 2 * k, 8},
                     {"DC", 2 * k, 8, k, 16}});
    }
}

TEST_CASE("to-point encoder yields a 16k-channel latent at 1^d") {
    NetworkSpec spec = fig1_spec(2, 16);
    Rng rng(1);
    Encoder enc = build_encoder(spec, rng);
    std::mt19937_64 data_rng(2);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.2, 2);
    ExecContext ctx;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    CHECK(latent->st.channels == 256);
    CHECK(latent->st.size[0] == 1);
    CHECK(latent->st.active() == 2); // one latent site per non-empty batch item
    CHECK(ps.levels() == 4);
}

TEST_CASE("fixed-factor encoder: 64^2 input, 16x downsample -> 4^2 latent") {
    NetworkSpec spec;
    spec.d = 2;
    spec.k = 2;
    spec.scales = 5; // factor 2^(5-1) = 16
    spec.mode = LatentMode::FixedFactor;
    Rng rng(3);
    Encoder enc = build_encoder(spec, rng);
    std::mt19937_64 data_rng(4);
    auto in = oracle::random_sparse(data_rng, 2, 64, 1, 0.05, 1);
    ExecContext ctx;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    CHECK(latent->st.size[0] == 4);
    CHECK(latent->st.channels == spec.latent_channels());
    CHECK(spec.downsample_factor() == 16);
}

TEST_CASE("linear channel growth: 32, 64, 96, 128, 160") {
    NetworkSpec spec;
    spec.k = 32;
    spec.growth = Growth::Linear;
    spec.scales = 5;
    std::vector<int> got;
    for (int j = 0; j < 5; ++j) got.push_back(spec.channels_at(j));
    CHECK(got == std::vector<int>{32, 64, 96, 128, 160});
}

TEST_CASE("pattern stack obeys the SC activation chain") {
    std::mt19937_64 data_rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        NetworkSpec spec = fig1_spec(2 + trial % 2, 2);
        Rng rng(6 + trial);
        Encoder enc = build_encoder(spec, rng);
        auto in = oracle::random_sparse(data_rng, spec.d, 16, 1, 0.15, 2);
        ExecContext ctx;
        PatternStack ps;
        enc.forward(ctx, make_node(in), &ps);
        CHECK(ps.patterns[0] == in.coords);
        validate_pattern_stack(ps); // throws on violation
    }
}

TEST_CASE("encoder patterns are weight-independent") {
    NetworkSpec spec = fig1_spec(2, 2);
    std::mt19937_64 data_rng(7);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.2, 1);
    PatternStack ps1, ps2;
    {
        Rng rng(8);
        Encoder enc = build_encoder(spec, rng);
        ExecContext ctx;
        enc.forward(ctx, make_node(in), &ps1);
    }
    {
        Rng rng(999);
        Encoder enc = build_encoder(spec, rng);
        ExecContext ctx;
        enc.forward(ctx, make_node(in), &ps2);
    }
    CHECK(ps1.patterns == ps2.patterns);
}

TEST_CASE("decoder: scale chain 1-4-8-16 and training-mode pattern equality") {
    NetworkSpec spec = fig1_spec(2, 2);
    Rng rng(9);
    Encoder enc = build_encoder(spec, rng);
    Decoder dec = build_decoder(spec, rng);
    std::mt19937_64 data_rng(10);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.15, 2);
    ExecContext ctx;
    ctx.training = true;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    DecodeTrace trace;
    NodePtr out = dec.forward(ctx, latent, &ps, false, &trace);

    CHECK(out->st.coords == in.coords); // output pattern == input pattern
    REQUIRE(trace.sizes.size() == 3);
    CHECK(trace.sizes[0][0] == 4);
    CHECK(trace.sizes[1][0] == 8);
    CHECK(trace.sizes[2][0] == 16);
    CHECK(ctx.sparsifier_records.size() == 3); // coarse to fine
    CHECK(ctx.sparsifier_records[0].level == 0);
    CHECK(ctx.sparsifier_records[2].level == 2);
}

TEST_CASE("decoder superset invariant holds on random inputs") {
    NetworkSpec spec = fig1_spec(2, 2);
    Rng rng(11);
    Encoder enc = build_encoder(spec, rng);
    Decoder dec = build_decoder(spec, rng);
    std::mt19937_64 data_rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.1 + 0.05 * (trial % 4), 2);
        ExecContext ctx;
        ctx.training = true;
        PatternStack ps;
        NodePtr latent = enc.forward(ctx, make_node(in), &ps);
        // sparsify_train itself throws PatternNotSubset on violation
        CHECK_NOTHROW(dec.forward(ctx, latent, &ps, false));
    }
}

TEST_CASE("threshold sparsify with an oracle first channel reproduces the encoder pattern") {
    NetworkSpec spec = fig1_spec(2, 2);
    Rng rng(13);
    Encoder enc = build_encoder(spec, rng);
    std::mt19937_64 data_rng(14);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.15, 1);
    ExecContext ctx;
    PatternStack ps;
    enc.forward(ctx, make_node(in), &ps);

    // greedy TC expansion of the coarse pattern, then a +1/-1 oracle channel
    for (int level = static_cast<int>(ps.patterns.size()) - 2; level >= 0; --level) {
        auto coarse = build_sparse_pattern(2, ps.sizes[level + 1], 1, ps.patterns[level + 1]);
        const int f = (level + 2 == static_cast<int>(ps.patterns.size())) ? 4 : 2;
        const int s = (f == 4) ? 1 : 2;
        auto tc = build_tc_rulebook(coarse, f, s);
        std::set<Coord> truth(ps.patterns[level].begin(), ps.patterns[level].end());
        std::vector<std::pair<Coord, std::vector<real>>> sites;
        for (const Coord& c : tc.out_coords) {
            sites.push_back({c, {truth.count(c) ? real(1) : real(-1)}});
        }
        auto expanded = build_sparse(2, tc.out_size, 1, sites, coarse.batch_count);
        NodePtr gated = sparsify_test(ctx, make_node(expanded));
        CHECK(gated->st.coords == ps.patterns[level]);
    }
}

TEST_CASE("NonConvNet: output pattern, logits shape, and locality") {
    NetworkSpec spec = fig1_spec(2, 2);
    Rng rng(15);
    Encoder enc = build_encoder(spec, rng);
    NonConvNet ncn = build_nonconvnet(spec, 5, rng);

    std::mt19937_64 data_rng(16);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.15, 1);
    ExecContext ctx;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    NodePtr logits = ncn.forward(ctx, latent, ps);
    CHECK(logits->st.coords == in.coords);
    CHECK(logits->st.channels == 5);
    CHECK(logits->st.feats.rows == in.active());

    // locality: same latent vector, same common site, different companions
    const Coord common = in.coords[0];
    auto mk_pattern = [&](uint64_t seed) {
        std::mt19937_64 r(seed);
        auto extra = oracle::random_pattern(r, 2, 16, 0.1, 1);
        std::set<Coord> sites(extra.begin(), extra.end());
        sites.insert(common);
        return std::vector<Coord>(sites.begin(), sites.end());
    };
    std::vector<real> latent_vec(static_cast<size_t>(spec.latent_channels()));
    std::uniform_real_distribution<double> u(-1, 1);
    for (real& v : latent_vec) v = static_cast<real>(u(data_rng));

    auto run = [&](const std::vector<Coord>& pattern) {
        auto t = build_sparse_pattern(2, {16, 16, 0, 0}, 1, pattern);
        ExecContext c2;
        PatternStack stack;
        enc.forward(c2, make_node(t), &stack); // patterns only; weights irrelevant
        auto latent_st = build_sparse(2, {1, 1, 0, 0}, spec.latent_channels(),
                                      {{make_coord(0, {0, 0}),
                                        std::vector<real>(latent_vec.begin(), latent_vec.end())}});
        ExecContext c3; // eval mode: batch-norm uses constant running statistics
        NodePtr out = ncn.forward(c3, make_node(latent_st), stack);
        const int32_t row = out->st.row_of(common);
        REQUIRE(row >= 0);
        return std::vector<real>(out->st.feats.row(row), out->st.feats.row(row) + 5);
    };
    auto l1 = run(mk_pattern(100));
    auto l2 = run(mk_pattern(200));
    CHECK(l1 == l2); // bitwise equality
}

TEST_CASE("U-Net: pattern preservation and skip concatenation widths") {
    NetworkSpec spec;
    spec.d = 2;
    spec.k = 4;
    spec.scales = 3;
    spec.mode = LatentMode::FixedFactor;
    Rng rng(17);
    UNet net = build_unet(spec, 3, rng);
    CHECK(net.dec_blocks[0].conv.in_ch == 2 * spec.channels_at(0));
    CHECK(net.dec_blocks[1].conv.in_ch == 2 * spec.channels_at(1));

    std::mt19937_64 data_rng(18);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.2, 2);
    ExecContext ctx;
    NodePtr logits = net.forward(ctx, make_node(in));
    CHECK(logits->st.coords == in.coords);
    CHECK(logits->st.channels == 3);
}

TEST_CASE("U-Net learns a separable synthetic segmentation task") {
    NetworkSpec spec;
    spec.d = 2;
    spec.k = 4;
    spec.scales = 3;
    spec.mode = LatentMode::FixedFactor;
    spec.in_channels = 2; // normalized site coordinates
    Rng rng(19);
    UNet net = build_unet(spec, 2, rng);
    std::vector<Param*> params;
    net.visit_params([&](const std::string&, Param& p) { params.push_back(&p); });
    OptimizerConfig ocfg;
    ocfg.adam.lr = 5e-3;
    Optimizer opt(ocfg);

    // class = sign of the first coordinate; coordinates are the features, so
    // the task is separable per site
    std::mt19937_64 data_rng(20);
    auto sample = [&]() {
        auto t = oracle::random_sparse(data_rng, 2, 16, 2, 0.25, 1);
        std::vector<int> labels(static_cast<size_t>(t.active()));
        for (int64_t r = 0; r < t.active(); ++r) {
            t.feats.at(r, 0) = (t.coords[r].pos[0] - real(7.5)) / real(8);
            t.feats.at(r, 1) = (t.coords[r].pos[1] - real(7.5)) / real(8);
            labels[static_cast<size_t>(r)] = t.coords[r].pos[0] < 8 ? 0 : 1;
        }
        return std::make_pair(t, labels);
    };

    for (int step = 0; step < 600; ++step) {
        auto [t, labels] = sample();
        Tape tape;
        ExecContext ctx;
        ctx.training = true;
        ctx.tape = &tape;
        NodePtr logits = net.forward(ctx, make_node(t));
        softmax_cross_entropy(logits, labels, &tape);
        opt.zero_grad(params);
        tape.backward();
        opt.step(params);
    }

    int64_t hits = 0, total = 0;
    for (int rep = 0; rep < 5; ++rep) {
        auto [t, labels] = sample();
        ExecContext ctx;
        NodePtr logits = net.forward(ctx, make_node(t));
        for (int64_t r = 0; r < logits->st.feats.rows; ++r) {
            const int pred = logits->st.feats.at(r, 1) > logits->st.feats.at(r, 0) ? 1 : 0;
            hits += pred == labels[static_cast<size_t>(r)];
            ++total;
        }
    }
    CHECK(static_cast<double>(hits) / total >= 0.99);
}

TEST_CASE("shape context: channel count and content") {
    SUBCASE("d=2, n=1, levels=4 -> 36 channels") {
        std::mt19937_64 rng(21);
        auto in = oracle::random_sparse(rng, 2, 16, 1, 0.2, 1);
        auto out = shape_context(in, 4);
        CHECK(out.channels == 36);
        CHECK(out.coords == in.coords);
    }
    SUBCASE("single active site at level 1: only the center cell responds") {
        auto in = build_sparse(2, {8, 8, 0, 0}, 1, {{make_coord(0, {3, 3}), {2.0}}});
        auto out = shape_context(in, 1);
        CHECK(out.channels == 9);
        for (int c = 0; c < 9; ++c) {
            if (c == 4) {
                CHECK(out.feats.at(0, c) == real(2.0));
            } else {
                CHECK(out.feats.at(0, c) == real(0));
            }
        }
    }
    SUBCASE("matches a dense multi-scale pooling oracle") {
        std::mt19937_64 rng(22);
        auto in = oracle::random_sparse(rng, 2, 16, 2, 0.3, 1);
        const int levels = 3;
        auto out = shape_context(in, levels);
        DenseTensor dense = to_dense(in);
        for (int64_t r = 0; r < in.active(); ++r) {
            const Coord& site = in.coords[r];
            for (int lvl = 0; lvl < levels; ++lvl) {
                const int sigma = 1 << lvl;
                int slot = 0;
                for (int dx = -1; dx <= 1; ++dx) {
                    for (int dy = -1; dy <= 1; ++dy, ++slot) {
                        const int cx = site.pos[0] / sigma + dx;
                        const int cy = site.pos[1] / sigma + dy;
                        for (int ch = 0; ch < 2; ++ch) {
                            real want = 0;
                            if (cx >= 0 && cy >= 0 && cx < 16 / sigma && cy < 16 / sigma) {
                                for (int ox = 0; ox < sigma; ++ox) {
                                    for (int oy = 0; oy < sigma; ++oy) {
                                        want += dense.at(0, ch,
                                                         {cx * sigma + ox, cy * sigma + oy, 0, 0});
                                    }
                                }
                                want /= static_cast<real>(sigma * sigma);
                            }
                            const real got = out.feats.at(r, (lvl * 9 + slot) * 2 + ch);
                            CHECK(got == doctest::Approx(want).epsilon(1e-9));
                        }
                    }
                }
            }
        }
    }
    SUBCASE("indivisible sizes are rejected") {
        auto in = build_sparse(2, {6, 6, 0, 0}, 1, {{make_coord(0, {0, 0}), {1.0}}});
        try {
            shape_context(in, 3); // needs divisibility by 4
            FAIL("expected BadGeometry");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BadGeometry);
        }
    }
}

TEST_CASE("classifier heads") {
    Rng rng(23);
    ClassifierHead lin = build_classifier_head(HeadKind::Linear, 12, 7, rng);
    int64_t count = 0;
    lin.visit_params([&](const std::string&, Param& p) { count += p.size(); });
    CHECK(count == 12 * 7 + 7);

    ClassifierHead mlp = build_classifier_head(HeadKind::Mlp, 12, 7, rng, 32);
    int layers = 0;
    mlp.visit_params([&](const std::string& n, Param&) { layers += n.find("weight") != std::string::npos; });
    CHECK(layers == 3); // two hidden layers plus the output projection

    auto in = build_sparse(2, {1, 1, 0, 0}, 12,
                           {{make_coord(0, {0, 0}), std::vector<real>(12, 0.1)}});
    ExecContext ctx;
    NodePtr logits = mlp.forward(ctx, make_node(in));
    Matrix p = softmax(logits->st.feats);
    real sum = 0;
    for (int j = 0; j < 7; ++j) sum += p.at(0, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("batch-norm burn-in changes statistics but not parameters") {
    NetworkSpec spec = fig1_spec(2, 2);
    Rng rng(24);
    Encoder enc = build_encoder(spec, rng);

    std::vector<real> before;
    enc.visit_params([&](const std::string&, Param& p) {
        before.insert(before.end(), p.value.begin(), p.value.end());
    });
    std::vector<real> rm_before;
    enc.visit_bn([&](const std::string&, BatchNormState& bn) {
        rm_before.insert(rm_before.end(), bn.running_mean.begin(), bn.running_mean.end());
    });

    std::mt19937_64 data_rng(25);
    std::vector<SparseTensor> batches;
    for (int i = 0; i < 4; ++i) batches.push_back(oracle::random_sparse(data_rng, 2, 16, 1, 0.2, 2));

    auto in = batches.front();
    ExecContext eval;
    PatternStack ps0;
    NodePtr pre = enc.forward(eval, make_node(in), &ps0);

    burn_in_batchnorm(enc, batches, 100);

    std::vector<real> after;
    enc.visit_params([&](const std::string&, Param& p) {
        after.insert(after.end(), p.value.begin(), p.value.end());
    });
    CHECK(before == after); // parameters bit-identical

    std::vector<real> rm_after;
    enc.visit_bn([&](const std::string&, BatchNormState& bn) {
        rm_after.insert(rm_after.end(), bn.running_mean.begin(), bn.running_mean.end());
    });
    CHECK(rm_before != rm_after); // statistics moved

    ExecContext eval2;
    PatternStack ps1;
    NodePtr post = enc.forward(eval2, make_node(in), &ps1);
    CHECK(pre->st.feats.v != post->st.feats.v); // eval outputs differ pre/post burn-in
}

TEST_CASE("network spec serialization round trip") {
    NetworkSpec spec;
    spec.d = 3;
    spec.k = 32;
    spec.growth = Growth::Linear;
    spec.block = BlockStyle::Residual2;
    spec.scales = 5;
    spec.mode = LatentMode::FixedFactor;
    spec.in_channels = 2;
    spec.latent_ssc_blocks = 1;
    NetworkSpec back = NetworkSpec::deserialize(spec.serialize());
    CHECK(back.d == spec.d);
    CHECK(back.k == spec.k);
    CHECK((back.growth == spec.growth));
    CHECK((back.block == spec.block));
    CHECK(back.scales == spec.scales);
    CHECK((back.mode == spec.mode));
    CHECK(back.in_channels == spec.in_channels);
    CHECK(back.latent_ssc_blocks == spec.latent_ssc_blocks);
}

TEST_CASE("NonConvNet latent post-processor blocks run on non-trivial latents") {
    NetworkSpec spec;
    spec.d = 2;
    spec.k = 2;
    spec.scales = 3;
    spec.mode = LatentMode::FixedFactor; // latent keeps spatial extent 4^2
    spec.latent_ssc_blocks = 1;
    Rng rng(28);
    Encoder enc = build_encoder(spec, rng);
    NonConvNet ncn = build_nonconvnet(spec, 3, rng);
    std::mt19937_64 data_rng(29);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.2, 2);
    ExecContext ctx;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    CHECK(latent->st.size[0] == 4);
    NodePtr logits = ncn.forward(ctx, latent, ps);
    CHECK(logits->st.coords == in.coords);
    CHECK(logits->st.channels == 3);
}

TEST_CASE("residual-style spec builds and runs end to end") {
    NetworkSpec spec = fig1_spec(2, 2);
    spec.block = BlockStyle::Residual2;
    Rng rng(26);
    Encoder enc = build_encoder(spec, rng);
    Decoder dec = build_decoder(spec, rng);
    std::mt19937_64 data_rng(27);
    auto in = oracle::random_sparse(data_rng, 2, 16, 1, 0.15, 1);
    ExecContext ctx;
    ctx.training = true;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    NodePtr out = dec.forward(ctx, latent, &ps, false);
    CHECK(out->st.coords == in.coords);
}
