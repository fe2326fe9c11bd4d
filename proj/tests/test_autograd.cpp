#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracle.hpp"
#include "spae/models.hpp"

using namespace spae;

namespace {

SparseTensor two_site_tensor(real a, real b) {
    return build_sparse(2, {4, 4, 0, 0}, 1,
                        {{make_coord(0, {0, 0}), {a}}, {make_coord(0, {1, 1}), {b}}});
}

} // namespace

TEST_CASE("mse_loss basics") {
    auto in = two_site_tensor(1.0, 2.0);
    CHECK(mse_loss(in, in) == real(0));

    auto one = build_sparse(2, {4, 4, 0, 0}, 1, {{make_coord(0, {0, 0}), {1.0}}});
    auto zero = build_sparse(2, {4, 4, 0, 0}, 1, {{make_coord(0, {0, 0}), {0.0}}});
    CHECK(mse_loss(one, zero) == real(1.0));

    SUBCASE("pattern mismatch is an error") {
        auto other = build_sparse(2, {4, 4, 0, 0}, 1, {{make_coord(0, {2, 2}), {1.0}}});
        try {
            mse_loss(one, other);
            FAIL("expected PatternMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::PatternMismatch);
        }
    }
    SUBCASE("empty input is an error") {
        auto empty = build_sparse(2, {4, 4, 0, 0}, 1, {});
        try {
            mse_loss(empty, empty);
            FAIL("expected EmptyInput");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyInput);
        }
    }
}

TEST_CASE("mse_loss matches a naive double-loop oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = oracle::random_sparse(rng, 2, 8, 3, 0.3, 2);
        SparseTensor b = a;
        std::uniform_real_distribution<double> u(-1, 1);
        for (real& v : b.feats.v) v = static_cast<real>(u(rng));
        real naive = 0;
        for (int64_t r = 0; r < a.active(); ++r) {
            for (int c = 0; c < a.channels; ++c) {
                const real d = a.feats.at(r, c) - b.feats.at(r, c);
                naive += d * d;
            }
        }
        naive /= static_cast<real>(a.active());
        CHECK(std::abs(mse_loss(a, b) - naive) <= 1e-12);
    }
}

TEST_CASE("sparsifier_loss formula") {
    auto mk = [](std::vector<real> fp, std::vector<real> fn_vals) {
        SparsifierRecord rec;
        std::vector<std::pair<Coord, std::vector<real>>> sites;
        int32_t x = 0;
        for (real v : fp) sites.push_back({make_coord(0, {x++, 0}), {v}});
        for (real v : fn_vals) sites.push_back({make_coord(0, {x++, 0}), {v}});
        rec.input = make_node(build_sparse(2, {16, 16, 0, 0}, 1, sites));
        for (int32_t i = 0; i < static_cast<int32_t>(fp.size()); ++i) rec.kept_rows.push_back(i);
        for (int32_t i = 0; i < static_cast<int32_t>(fn_vals.size()); ++i) {
            rec.dropped_rows.push_back(static_cast<int32_t>(fp.size()) + i);
        }
        return rec;
    };
    CHECK(sparsifier_loss(mk({2.0}, {})) == real(0));       // margin satisfied
    CHECK(sparsifier_loss(mk({0.0}, {0.0})) == real(2.0));  // 1 + 1
    CHECK(sparsifier_loss(mk({1.0}, {-1.0})) == real(0));   // exactly on the margins
    CHECK(sparsifier_loss(mk({0.5}, {})) == doctest::Approx(0.25));
    CHECK(sparsifier_loss(mk({}, {1.0})) == doctest::Approx(4.0));
}

TEST_CASE("hierarchical loss: additivity, monochrome flag, non-negativity") {
    auto in = two_site_tensor(1.0, 2.0);
    NodePtr out = make_node(in);

    ExecContext ctx;
    ctx.training = true;
    NodePtr gate_in = make_node(two_site_tensor(2.0, -3.0));
    sparsify_train(ctx, gate_in, {make_coord(0, {0, 0})}, 0);
    auto& recs = ctx.sparsifier_records;

    LossReport r1 = hierarchical_loss(in, out, recs, {1.0, 1.0}, false, nullptr);
    CHECK(r1.mse == real(0));
    CHECK(r1.total == doctest::Approx(sparsifier_loss(recs[0])));
    CHECK(r1.total >= 0);

    // perfect reconstruction + satisfied margins -> exactly zero
    NodePtr good_gate = make_node(two_site_tensor(2.0, -3.0));
    ExecContext ctx2;
    ctx2.training = true;
    sparsify_train(ctx2, good_gate, {make_coord(0, {0, 0})}, 0);
    LossReport r2 = hierarchical_loss(in, out, ctx2.sparsifier_records, {1.0, 1.0}, false, nullptr);
    CHECK(r2.total == real(0));

    // monochrome drops the MSE term
    SparseTensor bad = in;
    bad.feats.v[0] += 1.0;
    NodePtr bad_out = make_node(bad);
    LossReport r3 = hierarchical_loss(in, bad_out, ctx2.sparsifier_records, {1.0, 1.0}, true, nullptr);
    CHECK(r3.mse > 0);
    CHECK(r3.term_weights[0] == real(0));
    CHECK(r3.total == real(0));

    // weighted sum equals the sum of individually computed terms
    LossReport r4 = hierarchical_loss(in, bad_out, ctx.sparsifier_records, {2.0, 3.0}, false, nullptr);
    CHECK(r4.total ==
          doctest::Approx(2.0 * r4.mse + 3.0 * sparsifier_loss(ctx.sparsifier_records[0])));
}

TEST_CASE("single linear layer, quadratic loss: analytic gradient") {
    // L = sum (w x + b)^2 over one row => dL/dw = 2(wx+b)x, dL/db = 2(wx+b)
    LinearLayer lin;
    Rng rng(5);
    lin.configure(1, 1, rng);
    lin.weight.value[0] = 0.7;
    lin.bias.value[0] = -0.2;
    auto in = build_sparse(2, {4, 4, 0, 0}, 1, {{make_coord(0, {0, 0}), {1.5}}});
    Tape tape;
    ExecContext ctx;
    ctx.training = true;
    ctx.tape = &tape;
    NodePtr out = lin.forward(ctx, make_node(in));
    gradcheck::sumsq_loss(out, &tape);
    tape.backward();
    const real y = real(0.7) * real(1.5) - real(0.2);
    CHECK(lin.weight.grad[0] == doctest::Approx(2 * y * 1.5).epsilon(1e-12));
    CHECK(lin.bias.grad[0] == doctest::Approx(2 * y).epsilon(1e-12));
}

TEST_CASE("zero loss at an exact minimum gives zero gradients") {
    LinearLayer lin;
    Rng rng(6);
    lin.configure(2, 2, rng);
    std::fill(lin.weight.value.begin(), lin.weight.value.end(), real(0));
    auto in = build_sparse(2, {4, 4, 0, 0}, 2, {{make_coord(0, {0, 0}), {1.0, -1.0}}});
    Tape tape;
    ExecContext ctx;
    ctx.training = true;
    ctx.tape = &tape;
    NodePtr out = lin.forward(ctx, make_node(in));
    gradcheck::sumsq_loss(out, &tape);
    tape.backward();
    for (real g : lin.weight.grad) CHECK(g == real(0));
    for (real g : lin.bias.grad) CHECK(g == real(0));
}

namespace {

// finite differences against every parameter of a single layer stack
template <typename Forward>
void fd_layer_case(std::vector<std::pair<std::string, Param*>> params, Forward&& fwd) {
    Tape tape;
    fwd(&tape);
    for (auto& [n, p] : params) std::fill(p->grad.begin(), p->grad.end(), real(0));
    tape.backward();
    auto result = gradcheck::check_params(params, [&]() { return fwd(nullptr); });
    if (!result.ok()) {
        for (const auto& f : result.failures) {
            MESSAGE("param ", f.param, "[", f.index, "] analytic=", f.analytic,
                    " numeric=", f.numeric, " rel=", f.rel_err);
        }
    }
    CHECK(result.ok());
}

} // namespace

TEST_CASE("finite differences: conv layer types") {
    std::mt19937_64 data_rng(7);

    SUBCASE("SSC") {
        auto in = oracle::random_sparse(data_rng, 2, 6, 2, 0.3, 1);
        ConvLayer layer;
        Rng rng(8);
        layer.configure(ConvKind::SSC, 2, 2, 2, 3, 1, rng);
        auto rb = std::make_shared<const Rulebook>(build_ssc_rulebook(in, 3));
        auto fwd = [&](Tape* tape) {
            ExecContext ctx;
            ctx.training = true;
            ctx.update_bn_stats = false;
            ctx.tape = tape;
            return gradcheck::sumsq_loss(layer.forward(ctx, make_node(in), rb), tape);
        };
        fd_layer_case({{"kernel", &layer.kernel}, {"bias", &layer.bias}}, fwd);
    }
    SUBCASE("SC + TC chain") {
        auto in = oracle::random_sparse(data_rng, 2, 6, 2, 0.4, 1);
        ConvLayer down, up;
        Rng rng(9);
        down.configure(ConvKind::SC, 2, 2, 3, 2, 2, rng);
        up.configure(ConvKind::TC, 2, 3, 2, 2, 2, rng);
        auto fwd = [&](Tape* tape) {
            ExecContext ctx;
            ctx.training = true;
            ctx.update_bn_stats = false;
            ctx.tape = tape;
            auto rb1 = std::make_shared<const Rulebook>(build_sc_rulebook(in, 2, 2));
            NodePtr mid = down.forward(ctx, make_node(in), rb1);
            auto rb2 = std::make_shared<const Rulebook>(build_tc_rulebook(mid->st, 2, 2));
            return gradcheck::sumsq_loss(up.forward(ctx, mid, rb2), tape);
        };
        fd_layer_case({{"down.kernel", &down.kernel},
                       {"down.bias", &down.bias},
                       {"up.kernel", &up.kernel},
                       {"up.bias", &up.bias}},
                      fwd);
    }
    SUBCASE("DC over a recorded SC") {
        auto in = oracle::random_sparse(data_rng, 2, 6, 2, 0.4, 1);
        auto sc_rb = build_sc_rulebook(in, 2, 2);
        ConvLayer sc, dc;
        Rng rng(10);
        sc.configure(ConvKind::SC, 2, 2, 2, 2, 2, rng);
        dc.configure(ConvKind::DC, 2, 2, 2, 2, 2, rng);
        auto fwd = [&](Tape* tape) {
            ExecContext ctx;
            ctx.training = true;
            ctx.update_bn_stats = false;
            ctx.tape = tape;
            auto rb1 = std::make_shared<const Rulebook>(sc_rb);
            NodePtr mid = sc.forward(ctx, make_node(in), rb1);
            auto rb2 = std::make_shared<const Rulebook>(build_dc_rulebook(sc_rb));
            return gradcheck::sumsq_loss(dc.forward(ctx, mid, rb2), tape);
        };
        fd_layer_case({{"sc.kernel", &sc.kernel},
                       {"sc.bias", &sc.bias},
                       {"dc.kernel", &dc.kernel},
                       {"dc.bias", &dc.bias}},
                      fwd);
    }
    SUBCASE("batch norm, train mode with frozen statistics") {
        auto in = oracle::random_sparse(data_rng, 2, 6, 3, 0.5, 1);
        BatchNormState bn;
        bn.configure(3);
        auto fwd = [&](Tape* tape) {
            ExecContext ctx;
            ctx.training = true;
            ctx.update_bn_stats = false;
            ctx.tape = tape;
            return gradcheck::sumsq_loss(bn.forward(ctx, make_node(in)), tape);
        };
        fd_layer_case({{"scale", &bn.scale}, {"shift", &bn.shift}}, fwd);
    }
    SUBCASE("residual block") {
        auto in = oracle::random_sparse(data_rng, 2, 6, 2, 0.4, 1);
        ResidualBlock block;
        Rng rng(11);
        block.configure(2, 2, 3, rng);
        auto fwd = [&](Tape* tape) {
            ExecContext ctx;
            ctx.training = true;
            ctx.update_bn_stats = false;
            ctx.tape = tape;
            return gradcheck::sumsq_loss(block.forward(ctx, make_node(in)), tape);
        };
        fd_layer_case({{"c1.kernel", &block.conv1.kernel},
                       {"c1.bias", &block.conv1.bias},
                       {"c2.kernel", &block.conv2.kernel},
                       {"c2.bias", &block.conv2.bias},
                       {"bn1.scale", &block.bn1.scale},
                       {"bn1.shift", &block.bn1.shift},
                       {"bn2.scale", &block.bn2.scale},
                       {"bn2.shift", &block.bn2.shift}},
                      fwd);
    }
}

TEST_CASE("finite differences: softmax cross entropy head") {
    std::mt19937_64 data_rng(12);
    auto in = oracle::random_sparse(data_rng, 2, 6, 3, 0.4, 1);
    ClassifierHead head;
    Rng rng(13);
    head = build_classifier_head(HeadKind::Mlp, 3, 4, rng, 8);
    std::vector<int> labels(static_cast<size_t>(in.active()));
    for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
    auto fwd = [&](Tape* tape) {
        ExecContext ctx;
        ctx.training = true;
        ctx.update_bn_stats = false;
        ctx.tape = tape;
        NodePtr logits = head.forward(ctx, make_node(in));
        return softmax_cross_entropy(logits, labels, tape);
    };
    std::vector<std::pair<std::string, Param*>> params;
    head.visit_params([&](const std::string& n, Param& p) { params.emplace_back(n, &p); });
    fd_layer_case(params, fwd);
}

TEST_CASE("finite differences: mini autoencoder under the hierarchical loss") {
    NetworkSpec spec;
    spec.d = 2;
    spec.k = 2;
    spec.scales = 2; // input 8^2 -> to-point latent
    spec.mode = LatentMode::ToPoint;
    spec.in_channels = 1;
    Rng init(14);
    Encoder enc = build_encoder(spec, init);
    Decoder dec = build_decoder(spec, init);

    // two batch items keep the 1^d latent batch statistics generic; a single
    // sample would collapse the latent to the BN shift and park every ReLU
    // exactly on its kink, where finite differences are meaningless
    std::mt19937_64 data_rng(15);
    auto in = oracle::random_sparse(data_rng, 2, 8, 1, 0.25, 2);
    std::vector<real> weights(1 + dec.stages.size(), real(1));

    auto fwd = [&](Tape* tape) {
        ExecContext ctx;
        ctx.training = true;
        ctx.update_bn_stats = false;
        ctx.tape = tape;
        PatternStack ps;
        NodePtr latent = enc.forward(ctx, make_node(in), &ps);
        NodePtr out = dec.forward(ctx, latent, &ps, false);
        LossReport r = hierarchical_loss(in, out, ctx.sparsifier_records, weights, false, tape);
        return r.total;
    };
    std::vector<std::pair<std::string, Param*>> params;
    auto fn = [&](const std::string& n, Param& p) { params.emplace_back(n, &p); };
    enc.visit_params(fn);
    dec.visit_params(fn);

    Tape tape;
    fwd(&tape);
    for (auto& [n, p] : params) std::fill(p->grad.begin(), p->grad.end(), real(0));
    tape.backward();
    auto result = gradcheck::check_params(params, [&]() { return fwd(nullptr); });
    if (!result.ok()) {
        for (size_t i = 0; i < std::min<size_t>(5, result.failures.size()); ++i) {
            const auto& f = result.failures[i];
            MESSAGE("param ", f.param, "[", f.index, "] analytic=", f.analytic,
                    " numeric=", f.numeric, " rel=", f.rel_err);
        }
    }
    CHECK(result.ok());
    CHECK(result.checked > 100);
}

TEST_CASE("gradient locality: layers after the last Sparsify see no earlier hinge terms") {
    NetworkSpec spec;
    spec.d = 2;
    spec.k = 2;
    spec.scales = 2;
    spec.mode = LatentMode::ToPoint;
    Rng init(16);
    Encoder enc = build_encoder(spec, init);
    Decoder dec = build_decoder(spec, init);

    std::mt19937_64 data_rng(17);
    auto in = oracle::random_sparse(data_rng, 2, 8, 1, 0.3, 1);

    // only the coarsest sparsifier level carries weight; MSE off
    std::vector<real> weights(1 + dec.stages.size(), real(0));
    weights[1] = 1;

    Tape tape;
    ExecContext ctx;
    ctx.training = true;
    ctx.update_bn_stats = false;
    ctx.tape = &tape;
    PatternStack ps;
    NodePtr latent = enc.forward(ctx, make_node(in), &ps);
    NodePtr out = dec.forward(ctx, latent, &ps, false);
    hierarchical_loss(in, out, ctx.sparsifier_records, weights, false, &tape);

    std::vector<std::pair<std::string, Param*>> params;
    dec.visit_params([&](const std::string& n, Param& p) { params.emplace_back(n, &p); });
    for (auto& [n, p] : params) std::fill(p->grad.begin(), p->grad.end(), real(0));
    tape.backward();

    for (auto& [name, p] : params) {
        const bool after_first_gate =
            name.rfind("dec.s0.post", 0) == 0 || name.rfind("dec.s1", 0) == 0 ||
            name.rfind("dec.proj", 0) == 0;
        if (!after_first_gate) continue;
        for (real g : p->grad) CHECK(g == real(0));
    }
}

TEST_CASE("optimizer behaviour") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        Param p;
        p.resize({4});
        p.value = {1, 2, 3, 4};
        Optimizer opt(OptimizerConfig{});
        opt.step({&p});
        CHECK(p.value == std::vector<real>{1, 2, 3, 4});
    }
    SUBCASE("lr = 0 is the identity") {
        Param p;
        p.resize({2});
        p.value = {1, -1};
        p.grad = {5, 5};
        OptimizerConfig cfg;
        cfg.adam.lr = 0;
        Optimizer opt(cfg);
        opt.step({&p});
        CHECK(p.value == std::vector<real>{1, -1});
    }
    SUBCASE("quadratic bowl converges within 1e-3 in <= 1000 steps") {
        for (auto kind : {OptimizerConfig::Kind::Adam, OptimizerConfig::Kind::Sgd}) {
            Param p;
            p.resize({3});
            const std::vector<real> target = {0.3, -0.25, 0.1};
            OptimizerConfig cfg;
            cfg.kind = kind;
            cfg.sgd.lr = 1e-2;
            cfg.sgd.momentum = 0.9;
            Optimizer opt(cfg);
            for (int step = 0; step < 1000; ++step) {
                for (int i = 0; i < 3; ++i) p.grad[i] = 2 * (p.value[i] - target[i]);
                opt.step({&p});
            }
            for (int i = 0; i < 3; ++i) {
                CHECK(std::abs(p.value[i] - target[i]) < 1e-3);
            }
        }
    }
}

TEST_CASE("determinism: identical seeds give bit-identical loss reports") {
    auto run = [&]() {
        NetworkSpec spec;
        spec.d = 2;
        spec.k = 2;
        spec.scales = 2;
        Rng init(21);
        Encoder enc = build_encoder(spec, init);
        Decoder dec = build_decoder(spec, init);
        std::mt19937_64 data_rng(22);
        auto in = oracle::random_sparse(data_rng, 2, 8, 1, 0.3, 1);
        ExecContext ctx;
        ctx.training = true;
        PatternStack ps;
        NodePtr latent = enc.forward(ctx, make_node(in), &ps);
        NodePtr out = dec.forward(ctx, latent, &ps, false);
        std::vector<real> weights(1 + dec.stages.size(), real(1));
        return hierarchical_loss(in, out, ctx.sparsifier_records, weights, false, nullptr);
    };
    LossReport a = run();
    LossReport b = run();
    CHECK(a.total == b.total);
    CHECK(a.mse == b.mse);
    CHECK(a.sparsifier_losses == b.sparsifier_losses);
}
