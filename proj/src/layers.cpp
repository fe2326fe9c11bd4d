#include "spae/layers.hpp"

#include <algorithm>
#include <cmath>

namespace spae {

namespace {

int64_t ipow(int64_t base, int exp) {
    int64_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

void uniform_init(Param& p, real bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (real& w : p.value) w = static_cast<real>(dist(rng));
}

} // namespace

const char* conv_kind_name(ConvKind k) {
    switch (k) {
        case ConvKind::SC: return "SC";
        case ConvKind::SSC: return "SSC";
        case ConvKind::TC: return "TC";
        case ConvKind::DC: return "DC";
    }
    return "?";
}

SparseTensor structure_from_rulebook(const Rulebook& rb, int channels) {
    SparseTensor t;
    t.d = rb.d;
    t.batch_count = rb.in_batch;
    t.size = rb.out_size;
    t.channels = channels;
    t.coords = rb.out_coords;
    t.feats = Matrix(static_cast<int64_t>(t.coords.size()), channels);
    t.index.reserve(t.coords.size() * 2);
    for (size_t i = 0; i < t.coords.size(); ++i) t.index.emplace(t.coords[i], static_cast<int32_t>(i));
    return t;
}

void ConvLayer::configure(ConvKind k, int d_, int in_c, int out_c, int f_, int s_, Rng& rng) {
    kind = k;
    d = d_;
    in_ch = in_c;
    out_ch = out_c;
    f = f_;
    s = s_;
    kernel.resize({ipow(f, d), in_c, out_c});
    bias.resize({out_c});
    const real fan_in = static_cast<real>(in_c) * static_cast<real>(ipow(f, d));
    const real fan_out = static_cast<real>(out_c) * static_cast<real>(ipow(f, d));
    uniform_init(kernel, std::sqrt(real(6) / (fan_in + fan_out)), rng);
}

int ConvLayer::offsets() const { return static_cast<int>(ipow(f, d)); }

NodePtr ConvLayer::forward(ExecContext& ctx, const NodePtr& in, RulebookPtr rb) {
    check(in->st.channels == in_ch, ErrorCode::ShapeMismatch,
          std::string(conv_kind_name(kind)) + " layer expects " + std::to_string(in_ch) +
              " channels, got " + std::to_string(in->st.channels));
    check(rb->offset_count() == offsets() && rb->f == f, ErrorCode::ShapeMismatch,
          "rulebook geometry does not match layer filter");
    check(static_cast<int64_t>(rb->in_coords.size()) == in->st.active(), ErrorCode::ShapeMismatch,
          "rulebook was built for a different active set");

    NodePtr out = make_node(structure_from_rulebook(*rb, out_ch));
    GatherPlan plan = make_gather_plan(*rb, out->st.active());
    kern::conv_forward(plan, in->st.feats, kernel.value.data(), bias.value.data(), out->st.feats);

    if (ctx.grad()) {
        ScatterPlan scatter = make_scatter_plan(*rb, in->st.active());
        Param* kernel_p = &kernel;
        Param* bias_p = &bias;
        const int64_t m = in_ch;
        ctx.tape->record([in, out, rb, scatter = std::move(scatter), kernel_p, bias_p, m]() {
            kern::conv_backward_input(scatter, out->grad, kernel_p->value.data(), m, in->grad);
            kern::conv_backward_params(*rb, in->st.feats, out->grad, kernel_p->grad.data(),
                                       bias_p->grad.data());
        });
    }
    return out;
}

void BatchNormState::configure(int channels) {
    scale.resize({channels});
    shift.resize({channels});
    std::fill(scale.value.begin(), scale.value.end(), real(1));
    running_mean.assign(channels, real(0));
    running_var.assign(channels, real(1));
}

NodePtr BatchNormState::forward(ExecContext& ctx, const NodePtr& in) {
    check(in->st.channels == channels(), ErrorCode::ShapeMismatch, "batch norm channel mismatch");
    SparseTensor out_st = in->st;
    NodePtr out = make_node(std::move(out_st));
    if (in->st.active() == 0) return out;

    std::vector<real> mean(channels()), var(channels());
    const bool batch_stats = ctx.training;
    if (batch_stats) {
        kern::bn_stats(in->st.feats, mean.data(), var.data());
        if (ctx.update_bn_stats) {
            for (int c = 0; c < channels(); ++c) {
                running_mean[c] = momentum * running_mean[c] + (real(1) - momentum) * mean[c];
                running_var[c] = momentum * running_var[c] + (real(1) - momentum) * var[c];
            }
        }
    } else {
        mean = running_mean;
        var = running_var;
    }
    kern::bn_forward(in->st.feats, mean.data(), var.data(), scale.value.data(), shift.value.data(),
                     eps, out->st.feats);

    if (ctx.grad()) {
        Param* scale_p = &scale;
        Param* shift_p = &shift;
        const real eps_ = eps;
        ctx.tape->record([in, out, mean = std::move(mean), var = std::move(var), scale_p, shift_p,
                          eps_, batch_stats]() {
            kern::bn_backward(in->st.feats, out->grad, mean.data(), var.data(),
                              scale_p->value.data(), eps_, batch_stats, in->grad,
                              scale_p->grad.data(), shift_p->grad.data());
        });
    }
    return out;
}

void LinearLayer::configure(int in_d, int out_d, Rng& rng) {
    in_dim = in_d;
    out_dim = out_d;
    weight.resize({in_d, out_d});
    bias.resize({out_d});
    uniform_init(weight, std::sqrt(real(6) / static_cast<real>(in_d + out_d)), rng);
}

NodePtr LinearLayer::forward(ExecContext& ctx, const NodePtr& in) {
    check(in->st.channels == in_dim, ErrorCode::ShapeMismatch, "linear layer input width mismatch");
    SparseTensor out_st = in->st;
    out_st.channels = out_dim;
    out_st.feats = Matrix(in->st.active(), out_dim);
    NodePtr out = make_node(std::move(out_st));
    kern::linear_forward(in->st.feats, weight.value.data(), bias.value.data(), out->st.feats);

    if (ctx.grad()) {
        Param* w_p = &weight;
        Param* b_p = &bias;
        ctx.tape->record([in, out, w_p, b_p]() {
            kern::linear_backward_input(out->grad, w_p->value.data(), in->grad);
            kern::linear_backward_params(in->st.feats, out->grad, w_p->grad.data(),
                                         b_p->grad.data());
        });
    }
    return out;
}

NodePtr relu(ExecContext& ctx, const NodePtr& in) {
    SparseTensor out_st = in->st;
    NodePtr out = make_node(std::move(out_st));
    kern::relu_forward(in->st.feats, out->st.feats);
    if (ctx.grad()) {
        ctx.tape->record([in, out]() { kern::relu_backward(in->st.feats, out->grad, in->grad); });
    }
    return out;
}

NodePtr add(ExecContext& ctx, const NodePtr& a, const NodePtr& b) {
    check(a->st.coords == b->st.coords && a->st.channels == b->st.channels,
          ErrorCode::ShapeMismatch, "add requires identical structure");
    SparseTensor out_st = a->st;
    NodePtr out = make_node(std::move(out_st));
    kern::add_rows(a->st.feats, b->st.feats, out->st.feats);
    if (ctx.grad()) {
        ctx.tape->record([a, b, out]() {
            kern::accumulate(out->grad, a->grad);
            kern::accumulate(out->grad, b->grad);
        });
    }
    return out;
}

NodePtr concat_channels(ExecContext& ctx, const NodePtr& a, const NodePtr& b) {
    check(a->st.coords == b->st.coords, ErrorCode::ShapeMismatch,
          "concat requires identical active sets");
    SparseTensor out_st = a->st;
    out_st.channels = a->st.channels + b->st.channels;
    out_st.feats = Matrix(a->st.active(), out_st.channels);
    const int ca = a->st.channels, cb = b->st.channels;
    for (int64_t r = 0; r < a->st.active(); ++r) {
        std::copy(a->st.feats.row(r), a->st.feats.row(r) + ca, out_st.feats.row(r));
        std::copy(b->st.feats.row(r), b->st.feats.row(r) + cb, out_st.feats.row(r) + ca);
    }
    NodePtr out = make_node(std::move(out_st));
    if (ctx.grad()) {
        ctx.tape->record([a, b, out, ca, cb]() {
            for (int64_t r = 0; r < a->st.active(); ++r) {
                const real* g = out->grad.row(r);
                real* ga = a->grad.row(r);
                real* gb = b->grad.row(r);
                for (int c = 0; c < ca; ++c) ga[c] += g[c];
                for (int c = 0; c < cb; ++c) gb[c] += g[ca + c];
            }
        });
    }
    return out;
}

NodePtr sparsify_train(ExecContext& ctx, const NodePtr& in, const std::vector<Coord>& pattern,
                       int level) {
    std::vector<Coord> kept = pattern;
    std::sort(kept.begin(), kept.end());

    SparsifierRecord rec;
    rec.level = level;
    rec.input = in;
    rec.kept_rows.reserve(kept.size());
    std::vector<char> is_kept(static_cast<size_t>(in->st.active()), 0);
    for (const Coord& c : kept) {
        int32_t row = in->st.row_of(c);
        check(row >= 0, ErrorCode::PatternNotSubset,
              "encoder pattern site " + coord_str(c, in->st.d) +
                  " absent from sparsifier input (superset invariant violated)");
        rec.kept_rows.push_back(row);
        is_kept[static_cast<size_t>(row)] = 1;
    }
    for (int64_t r = 0; r < in->st.active(); ++r) {
        if (!is_kept[static_cast<size_t>(r)]) rec.dropped_rows.push_back(static_cast<int32_t>(r));
    }

    SparseTensor out_st;
    out_st.d = in->st.d;
    out_st.batch_count = in->st.batch_count;
    out_st.size = in->st.size;
    out_st.channels = in->st.channels;
    out_st.coords = std::move(kept);
    out_st.feats = Matrix(static_cast<int64_t>(out_st.coords.size()), out_st.channels);
    out_st.index.reserve(out_st.coords.size() * 2);
    for (size_t i = 0; i < out_st.coords.size(); ++i) {
        out_st.index.emplace(out_st.coords[i], static_cast<int32_t>(i));
        std::copy(in->st.feats.row(rec.kept_rows[i]), in->st.feats.row(rec.kept_rows[i]) + out_st.channels,
                  out_st.feats.row(static_cast<int64_t>(i)));
    }
    NodePtr out = make_node(std::move(out_st));

    if (ctx.grad()) {
        auto kept_rows = rec.kept_rows;
        ctx.tape->record([in, out, kept_rows = std::move(kept_rows)]() {
            const int ch = in->st.channels;
            for (size_t i = 0; i < kept_rows.size(); ++i) {
                const real* g = out->grad.row(static_cast<int64_t>(i));
                real* gi = in->grad.row(kept_rows[i]);
                for (int c = 0; c < ch; ++c) gi[c] += g[c];
            }
        });
    }
    ctx.sparsifier_records.push_back(std::move(rec));
    return out;
}

NodePtr sparsify_test(ExecContext& ctx, const NodePtr& in) {
    check(in->st.channels >= 1, ErrorCode::ShapeMismatch, "sparsify needs at least one channel");
    std::vector<int32_t> kept_rows;
    for (int64_t r = 0; r < in->st.active(); ++r) {
        if (in->st.feats.at(r, 0) > real(0)) kept_rows.push_back(static_cast<int32_t>(r));
    }
    SparseTensor out_st;
    out_st.d = in->st.d;
    out_st.batch_count = in->st.batch_count;
    out_st.size = in->st.size;
    out_st.channels = in->st.channels;
    out_st.coords.reserve(kept_rows.size());
    out_st.feats = Matrix(static_cast<int64_t>(kept_rows.size()), out_st.channels);
    for (size_t i = 0; i < kept_rows.size(); ++i) {
        out_st.coords.push_back(in->st.coords[kept_rows[i]]);
        out_st.index.emplace(out_st.coords.back(), static_cast<int32_t>(i));
        std::copy(in->st.feats.row(kept_rows[i]), in->st.feats.row(kept_rows[i]) + out_st.channels,
                  out_st.feats.row(static_cast<int64_t>(i)));
    }
    NodePtr out = make_node(std::move(out_st));
    if (ctx.grad()) {
        ctx.tape->record([in, out, kept_rows = std::move(kept_rows)]() {
            const int ch = in->st.channels;
            for (size_t i = 0; i < kept_rows.size(); ++i) {
                const real* g = out->grad.row(static_cast<int64_t>(i));
                real* gi = in->grad.row(kept_rows[i]);
                for (int c = 0; c < ch; ++c) gi[c] += g[c];
            }
        });
    }
    return out;
}

void ResidualBlock::configure(int d, int channels, int f, Rng& rng) {
    conv1.configure(ConvKind::SSC, d, channels, channels, f, 1, rng);
    conv2.configure(ConvKind::SSC, d, channels, channels, f, 1, rng);
    bn1.configure(channels);
    bn2.configure(channels);
}

NodePtr ResidualBlock::forward(ExecContext& ctx, const NodePtr& in) {
    // SSC/BN/ReLU keep the active set, so one rulebook serves both convs
    auto rb = std::make_shared<const Rulebook>(build_ssc_rulebook(in->st, conv1.f));
    NodePtr h = relu(ctx, bn1.forward(ctx, conv1.forward(ctx, in, rb)));
    h = relu(ctx, bn2.forward(ctx, conv2.forward(ctx, h, rb)));
    return add(ctx, in, h);
}

} // namespace spae
