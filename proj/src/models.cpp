#include "spae/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace spae {

namespace {

int64_t ipow(int64_t base, int exp) {
    int64_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

RulebookPtr share(Rulebook rb) { return std::make_shared<const Rulebook>(std::move(rb)); }

} // namespace

void NetworkSpec::validate() const {
    check(d >= 2 && d <= kMaxDim, ErrorCode::SpecInvalid, "network dimension must be 2..4");
    check(k >= 1, ErrorCode::SpecInvalid, "base channel count must be positive");
    check(scales >= 2, ErrorCode::SpecInvalid, "need at least two spatial levels");
    check(in_channels >= 1, ErrorCode::SpecInvalid, "input channel count must be positive");
    check(latent_ssc_blocks >= 0, ErrorCode::SpecInvalid, "latent block count must be >= 0");
}

std::string NetworkSpec::serialize() const {
    std::ostringstream os;
    os << "d = " << d << "\n";
    os << "k = " << k << "\n";
    os << "growth = " << (growth == Growth::Doubling ? "doubling" : "linear") << "\n";
    os << "block = " << (block == BlockStyle::SingleSSC ? "single" : "residual2") << "\n";
    os << "scales = " << scales << "\n";
    os << "mode = " << (mode == LatentMode::ToPoint ? "to_point" : "fixed_factor") << "\n";
    os << "in_channels = " << in_channels << "\n";
    os << "latent_ssc_blocks = " << latent_ssc_blocks << "\n";
    return os.str();
}

NetworkSpec NetworkSpec::deserialize(const std::string& text) {
    NetworkSpec spec;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            auto e = s.find_last_not_of(" \t\r");
            s.erase(e == std::string::npos ? 0 : e + 1);
            return s;
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "d") spec.d = std::stoi(val);
        else if (key == "k") spec.k = std::stoi(val);
        else if (key == "growth") spec.growth = val == "linear" ? Growth::Linear : Growth::Doubling;
        else if (key == "block")
            spec.block = val == "residual2" ? BlockStyle::Residual2 : BlockStyle::SingleSSC;
        else if (key == "scales") spec.scales = std::stoi(val);
        else if (key == "mode")
            spec.mode = val == "fixed_factor" ? LatentMode::FixedFactor : LatentMode::ToPoint;
        else if (key == "in_channels") spec.in_channels = std::stoi(val);
        else if (key == "latent_ssc_blocks") spec.latent_ssc_blocks = std::stoi(val);
        else fail(ErrorCode::SpecInvalid, "unknown network spec key: " + key);
    }
    spec.validate();
    return spec;
}

void ConvBnRelu::visit_params(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".kernel", conv.kernel);
    fn(prefix + ".bias", conv.bias);
    fn(prefix + ".bn.scale", bn.scale);
    fn(prefix + ".bn.shift", bn.shift);
}

void ConvBnRelu::visit_bn(const std::string& prefix, const BnVisitor& fn) {
    fn(prefix + ".bn", bn);
}

void SscBlock::configure(BlockStyle st, int d, int channels, Rng& rng) {
    style = st;
    if (style == BlockStyle::SingleSSC) {
        conv.configure(ConvKind::SSC, d, channels, channels, 3, 1, rng);
        bn.configure(channels);
    } else {
        res1.configure(d, channels, 3, rng);
        res2.configure(d, channels, 3, rng);
    }
}

NodePtr SscBlock::forward(ExecContext& ctx, const NodePtr& in) {
    if (style == BlockStyle::SingleSSC) {
        auto rb = share(build_ssc_rulebook(in->st, conv.f));
        return relu(ctx, bn.forward(ctx, conv.forward(ctx, in, rb)));
    }
    return res2.forward(ctx, res1.forward(ctx, in));
}

void SscBlock::visit_params(const std::string& prefix, const ParamVisitor& fn) {
    if (style == BlockStyle::SingleSSC) {
        fn(prefix + ".kernel", conv.kernel);
        fn(prefix + ".bias", conv.bias);
        fn(prefix + ".bn.scale", bn.scale);
        fn(prefix + ".bn.shift", bn.shift);
    } else {
        auto res = [&](const std::string& p, ResidualBlock& r) {
            fn(p + ".c1.kernel", r.conv1.kernel);
            fn(p + ".c1.bias", r.conv1.bias);
            fn(p + ".bn1.scale", r.bn1.scale);
            fn(p + ".bn1.shift", r.bn1.shift);
            fn(p + ".c2.kernel", r.conv2.kernel);
            fn(p + ".c2.bias", r.conv2.bias);
            fn(p + ".bn2.scale", r.bn2.scale);
            fn(p + ".bn2.shift", r.bn2.shift);
        };
        res(prefix + ".r1", res1);
        res(prefix + ".r2", res2);
    }
}

void SscBlock::visit_bn(const std::string& prefix, const BnVisitor& fn) {
    if (style == BlockStyle::SingleSSC) {
        fn(prefix + ".bn", bn);
    } else {
        fn(prefix + ".r1.bn1", res1.bn1);
        fn(prefix + ".r1.bn2", res1.bn2);
        fn(prefix + ".r2.bn1", res2.bn1);
        fn(prefix + ".r2.bn2", res2.bn2);
    }
}

Encoder build_encoder(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Encoder enc;
    enc.spec = spec;
    enc.stem.configure(spec.in_channels, spec.channels_at(0), rng);
    enc.blocks.resize(spec.scales);
    for (int j = 0; j < spec.scales; ++j) {
        enc.blocks[j].configure(spec.block, spec.d, spec.channels_at(j), rng);
    }
    enc.downs.resize(spec.scales - 1);
    for (int j = 0; j + 1 < spec.scales; ++j) {
        enc.downs[j].configure(ConvKind::SC, spec.d, spec.channels_at(j), spec.channels_at(j + 1),
                               2, 2, rng);
    }
    if (spec.mode == LatentMode::ToPoint) {
        enc.to_point.emplace();
        enc.to_point->configure(ConvKind::SC, spec.d, spec.channels_at(spec.scales - 1),
                                spec.latent_channels(), 4, 1, rng);
    }
    return enc;
}

NodePtr Encoder::forward(ExecContext& ctx, const NodePtr& input, PatternStack* ps) {
    check(input->st.channels == spec.in_channels, ErrorCode::ShapeMismatch,
          "encoder expects " + std::to_string(spec.in_channels) + " input channels");
    for (int i = 0; i < spec.d; ++i) {
        if (spec.mode == LatentMode::ToPoint) {
            check(input->st.size[i] == spec.min_input_size(), ErrorCode::SpecInvalid,
                  "to_point encoder requires input size " + std::to_string(spec.min_input_size()));
        } else {
            check(input->st.size[i] % spec.downsample_factor() == 0 &&
                      input->st.size[i] >= spec.min_input_size(),
                  ErrorCode::SpecInvalid, "input size not divisible by the downsample factor");
        }
    }

    NodePtr x = stem.forward(ctx, input);
    if (ps) {
        ps->patterns.push_back(x->st.coords);
        ps->sizes.push_back(x->st.size);
    }
    for (int j = 0; j < spec.scales; ++j) {
        x = blocks[j].forward(ctx, x);
        if (j + 1 < spec.scales) {
            auto rb = share(build_sc_rulebook(x->st, 2, 2));
            x = downs[j].forward(ctx, x, rb);
            if (ps) {
                ps->sc_books.push_back(rb);
                ps->patterns.push_back(x->st.coords);
                ps->sizes.push_back(x->st.size);
            }
        }
    }
    if (to_point) {
        auto rb = share(build_sc_rulebook(x->st, 4, 1));
        x = to_point->forward(ctx, x, rb);
        if (ps) {
            ps->sc_books.push_back(rb);
            ps->patterns.push_back(x->st.coords);
            ps->sizes.push_back(x->st.size);
        }
    }
    return x;
}

void Encoder::visit_params(const ParamVisitor& fn) {
    fn("enc.stem.weight", stem.weight);
    fn("enc.stem.bias", stem.bias);
    for (size_t j = 0; j < blocks.size(); ++j) {
        blocks[j].visit_params("enc.l" + std::to_string(j), fn);
    }
    for (size_t j = 0; j < downs.size(); ++j) {
        downs[j].visit_params("enc.down" + std::to_string(j), fn);
    }
    if (to_point) to_point->visit_params("enc.latent", fn);
}

void Encoder::visit_bn(const BnVisitor& fn) {
    for (size_t j = 0; j < blocks.size(); ++j) blocks[j].visit_bn("enc.l" + std::to_string(j), fn);
    for (size_t j = 0; j < downs.size(); ++j) downs[j].visit_bn("enc.down" + std::to_string(j), fn);
    if (to_point) to_point->visit_bn("enc.latent", fn);
}

Decoder build_decoder(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Decoder dec;
    dec.spec = spec;
    const int S = spec.scales;
    const int n_stages = (spec.mode == LatentMode::ToPoint) ? S : S - 1;
    dec.stages.resize(n_stages);
    for (int i = 0; i < n_stages; ++i) {
        // stage i upsamples into level `target`, counting levels fine-to-coarse
        const int target = (spec.mode == LatentMode::ToPoint) ? S - 1 - i : S - 2 - i;
        const int c_out = spec.channels_at(target);
        int c_in;
        int f, s;
        if (spec.mode == LatentMode::ToPoint && i == 0) {
            c_in = spec.latent_channels();
            f = 4;
            s = 1;
        } else {
            c_in = spec.channels_at(target + 1);
            f = 2;
            s = 2;
        }
        dec.stages[i].tc.configure(ConvKind::TC, spec.d, c_in, c_out, f, s, rng);
        dec.stages[i].pre_ssc.configure(ConvKind::SSC, spec.d, c_out, c_out, 3, 1, rng);
        dec.stages[i].post_block.configure(spec.block, spec.d, c_out, rng);
    }
    dec.proj.configure(spec.channels_at(0), spec.in_channels, rng);
    return dec;
}

NodePtr Decoder::forward(ExecContext& ctx, const NodePtr& latent, const PatternStack* ps,
                         bool threshold, DecodeTrace* trace) {
    check(threshold || ps != nullptr, ErrorCode::MissingPattern,
          "pattern-restoring decode requires the encoder pattern stack");
    check(latent->st.channels == spec.latent_channels(), ErrorCode::ShapeMismatch,
          "decoder latent width mismatch");
    NodePtr x = latent;
    const int L = (spec.mode == LatentMode::ToPoint) ? spec.scales + 1 : spec.scales;
    for (size_t i = 0; i < stages.size(); ++i) {
        Stage& st = stages[i];
        auto rb_tc = share(build_tc_rulebook(x->st, st.tc.conv.f, st.tc.conv.s));
        x = st.tc.forward(ctx, x, rb_tc);
        auto rb_ssc = share(build_ssc_rulebook(x->st, st.pre_ssc.f));
        x = st.pre_ssc.forward(ctx, x, rb_ssc); // raw SSC output: channel 0 is f(x)
        if (threshold) {
            x = sparsify_test(ctx, x);
        } else {
            const int level = L - 2 - static_cast<int>(i);
            check(level >= 0 && level < ps->levels(), ErrorCode::MissingPattern,
                  "pattern stack too shallow for decoder");
            x = sparsify_train(ctx, x, ps->patterns[level], static_cast<int>(i));
        }
        if (trace) {
            trace->patterns.push_back(x->st.coords);
            trace->sizes.push_back(x->st.size);
        }
        x = st.post_block.forward(ctx, x);
    }
    return proj.forward(ctx, x);
}

void Decoder::visit_params(const ParamVisitor& fn) {
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string p = "dec.s" + std::to_string(i);
        stages[i].tc.visit_params(p + ".tc", fn);
        fn(p + ".pre.kernel", stages[i].pre_ssc.kernel);
        fn(p + ".pre.bias", stages[i].pre_ssc.bias);
        stages[i].post_block.visit_params(p + ".post", fn);
    }
    fn("dec.proj.weight", proj.weight);
    fn("dec.proj.bias", proj.bias);
}

void Decoder::visit_bn(const BnVisitor& fn) {
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string p = "dec.s" + std::to_string(i);
        stages[i].tc.visit_bn(p + ".tc", fn);
        stages[i].post_block.visit_bn(p + ".post", fn);
    }
}

NonConvNet build_nonconvnet(const NetworkSpec& spec, int classes, Rng& rng) {
    spec.validate();
    check(classes >= 2, ErrorCode::SpecInvalid, "need at least two classes");
    NonConvNet net;
    net.spec = spec;
    net.classes = classes;
    net.latent_blocks.resize(spec.latent_ssc_blocks);
    for (auto& b : net.latent_blocks) {
        b.configure(spec.block, spec.d, spec.latent_channels(), rng);
    }
    const int S = spec.scales;
    const int transitions = (spec.mode == LatentMode::ToPoint) ? S : S - 1;
    net.dcs.resize(transitions);
    for (int i = 0; i < transitions; ++i) {
        const int target = (spec.mode == LatentMode::ToPoint) ? S - 1 - i : S - 2 - i;
        const int c_out = spec.channels_at(target);
        int c_in, f, s;
        if (spec.mode == LatentMode::ToPoint && i == 0) {
            c_in = spec.latent_channels();
            f = 4;
            s = 1;
        } else {
            c_in = spec.channels_at(target + 1);
            f = 2;
            s = 2;
        }
        net.dcs[i].configure(ConvKind::DC, spec.d, c_in, c_out, f, s, rng);
    }
    net.head.configure(spec.channels_at(0), classes, rng);
    return net;
}

NodePtr NonConvNet::forward(ExecContext& ctx, const NodePtr& latent, const PatternStack& ps) {
    NodePtr x = latent;
    for (auto& b : latent_blocks) x = b.forward(ctx, x);
    const int books = static_cast<int>(ps.sc_books.size());
    check(books == static_cast<int>(dcs.size()), ErrorCode::MissingPattern,
          "pattern stack does not match the deconvolution chain");
    for (size_t i = 0; i < dcs.size(); ++i) {
        auto dc_rb = share(build_dc_rulebook(*ps.sc_books[books - 1 - static_cast<int>(i)]));
        x = dcs[i].forward(ctx, x, dc_rb);
    }
    return head.forward(ctx, x);
}

void NonConvNet::visit_params(const ParamVisitor& fn) {
    for (size_t i = 0; i < latent_blocks.size(); ++i) {
        latent_blocks[i].visit_params("ncn.lat" + std::to_string(i), fn);
    }
    for (size_t i = 0; i < dcs.size(); ++i) {
        dcs[i].visit_params("ncn.dc" + std::to_string(i), fn);
    }
    fn("ncn.head.weight", head.weight);
    fn("ncn.head.bias", head.bias);
}

void NonConvNet::visit_bn(const BnVisitor& fn) {
    for (size_t i = 0; i < latent_blocks.size(); ++i) {
        latent_blocks[i].visit_bn("ncn.lat" + std::to_string(i), fn);
    }
    for (size_t i = 0; i < dcs.size(); ++i) dcs[i].visit_bn("ncn.dc" + std::to_string(i), fn);
}

UNet build_unet(const NetworkSpec& spec, int classes, Rng& rng) {
    spec.validate();
    check(classes >= 2, ErrorCode::SpecInvalid, "need at least two classes");
    UNet net;
    net.spec = spec;
    net.classes = classes;
    net.stem.configure(spec.in_channels, spec.channels_at(0), rng);
    const int S = spec.scales;
    net.enc_blocks.resize(S);
    for (int j = 0; j < S; ++j) net.enc_blocks[j].configure(spec.block, spec.d, spec.channels_at(j), rng);
    net.downs.resize(S - 1);
    for (int j = 0; j + 1 < S; ++j) {
        net.downs[j].configure(ConvKind::SC, spec.d, spec.channels_at(j), spec.channels_at(j + 1), 2, 2, rng);
    }
    net.ups.resize(S - 1);
    net.dec_blocks.resize(S - 1);
    for (int j = 0; j + 1 < S; ++j) {
        // ups[j]/dec_blocks[j] produce level j from level j+1
        net.ups[j].configure(ConvKind::DC, spec.d, spec.channels_at(j + 1), spec.channels_at(j), 2, 2, rng);
        net.dec_blocks[j].configure(ConvKind::SSC, spec.d, 2 * spec.channels_at(j), spec.channels_at(j), 3, 1, rng);
    }
    net.head.configure(spec.channels_at(0), classes, rng);
    return net;
}

NodePtr UNet::forward(ExecContext& ctx, const NodePtr& input) {
    NodePtr x = stem.forward(ctx, input);
    std::vector<NodePtr> skips;
    std::vector<RulebookPtr> books;
    const int S = spec.scales;
    for (int j = 0; j < S; ++j) {
        x = enc_blocks[j].forward(ctx, x);
        if (j + 1 < S) {
            skips.push_back(x);
            auto rb = share(build_sc_rulebook(x->st, 2, 2));
            books.push_back(rb);
            x = downs[j].forward(ctx, x, rb);
        }
    }
    for (int j = S - 2; j >= 0; --j) {
        auto dc_rb = share(build_dc_rulebook(*books[j]));
        x = ups[j].forward(ctx, x, dc_rb);
        x = concat_channels(ctx, x, skips[j]);
        auto rb = share(build_ssc_rulebook(x->st, dec_blocks[j].conv.f));
        x = dec_blocks[j].forward(ctx, x, rb);
    }
    return head.forward(ctx, x);
}

void UNet::visit_params(const ParamVisitor& fn) {
    fn("unet.stem.weight", stem.weight);
    fn("unet.stem.bias", stem.bias);
    for (size_t j = 0; j < enc_blocks.size(); ++j) {
        enc_blocks[j].visit_params("unet.e" + std::to_string(j), fn);
    }
    for (size_t j = 0; j < downs.size(); ++j) {
        downs[j].visit_params("unet.down" + std::to_string(j), fn);
    }
    for (size_t j = 0; j < ups.size(); ++j) {
        ups[j].visit_params("unet.up" + std::to_string(j), fn);
        dec_blocks[j].visit_params("unet.d" + std::to_string(j), fn);
    }
    fn("unet.head.weight", head.weight);
    fn("unet.head.bias", head.bias);
}

void UNet::visit_bn(const BnVisitor& fn) {
    for (size_t j = 0; j < enc_blocks.size(); ++j) enc_blocks[j].visit_bn("unet.e" + std::to_string(j), fn);
    for (size_t j = 0; j < downs.size(); ++j) downs[j].visit_bn("unet.down" + std::to_string(j), fn);
    for (size_t j = 0; j < ups.size(); ++j) {
        ups[j].visit_bn("unet.up" + std::to_string(j), fn);
        dec_blocks[j].visit_bn("unet.d" + std::to_string(j), fn);
    }
}

ClassifierHead build_classifier_head(HeadKind kind, int in_dim, int classes, Rng& rng, int hidden) {
    check(in_dim > 0 && classes >= 2, ErrorCode::SpecInvalid, "bad classifier head dimensions");
    ClassifierHead head;
    head.kind = kind;
    head.in_dim = in_dim;
    head.classes = classes;
    head.hidden = hidden;
    if (kind == HeadKind::Linear) {
        head.l1.configure(in_dim, classes, rng);
    } else {
        head.l1.configure(in_dim, hidden, rng);
        head.l2.configure(hidden, hidden, rng);
        head.l3.configure(hidden, classes, rng);
    }
    return head;
}

NodePtr ClassifierHead::forward(ExecContext& ctx, const NodePtr& in) {
    if (kind == HeadKind::Linear) return l1.forward(ctx, in);
    NodePtr h = relu(ctx, l1.forward(ctx, in));
    h = relu(ctx, l2.forward(ctx, h));
    return l3.forward(ctx, h);
}

void ClassifierHead::visit_params(const ParamVisitor& fn) {
    fn("head.l1.weight", l1.weight);
    fn("head.l1.bias", l1.bias);
    if (kind == HeadKind::Mlp) {
        fn("head.l2.weight", l2.weight);
        fn("head.l2.bias", l2.bias);
        fn("head.l3.weight", l3.weight);
        fn("head.l3.bias", l3.bias);
    }
}

SparseTensor shape_context(const SparseTensor& in, int levels) {
    check(levels >= 1, ErrorCode::BadGeometry, "shape_context needs levels >= 1");
    const int top = 1 << (levels - 1);
    for (int i = 0; i < in.d; ++i) {
        check(in.size[i] % top == 0, ErrorCode::BadGeometry,
              "spatial sizes must be divisible by 2^(levels-1)");
    }
    const int n = in.channels;
    const int gather = static_cast<int>(ipow(3, in.d));
    const int out_ch = gather * n * levels;

    SparseTensor out;
    out.d = in.d;
    out.batch_count = in.batch_count;
    out.size = in.size;
    out.channels = out_ch;
    out.coords = in.coords;
    out.index = in.index;
    out.feats = Matrix(in.active(), out_ch);

    std::vector<real> cell(static_cast<size_t>(n));
    for (int lvl = 0; lvl < levels; ++lvl) {
        const int32_t sigma = 1 << lvl;
        const real inv_vol = real(1) / static_cast<real>(ipow(sigma, in.d));
        // average-pool: sum active rows per cell in canonical order
        std::unordered_map<Coord, std::vector<real>, CoordHash> pooled;
        for (int64_t r = 0; r < in.active(); ++r) {
            Coord c = in.coords[r];
            for (int i = 0; i < in.d; ++i) c.pos[i] /= sigma;
            auto [it, fresh] = pooled.try_emplace(c, std::vector<real>(n, real(0)));
            for (int ch = 0; ch < n; ++ch) it->second[ch] += in.feats.at(r, ch);
        }
        for (auto& [c, v] : pooled) {
            for (int ch = 0; ch < n; ++ch) v[ch] *= inv_vol;
        }
        // gather the 3^d neighborhood of each site's cell, then unpool back
        // onto the original active set
        for (int64_t r = 0; r < in.active(); ++r) {
            Coord base = in.coords[r];
            for (int i = 0; i < in.d; ++i) base.pos[i] /= sigma;
            std::array<int32_t, kMaxDim> delta{};
            for (int i = 0; i < in.d; ++i) delta[i] = -1;
            int slot = 0;
            while (true) {
                Coord nb = base;
                bool in_bounds = true;
                for (int i = 0; i < in.d; ++i) {
                    nb.pos[i] += delta[i];
                    if (nb.pos[i] < 0 || nb.pos[i] >= (in.size[i] / sigma)) in_bounds = false;
                }
                const std::vector<real>* v = nullptr;
                if (in_bounds) {
                    auto it = pooled.find(nb);
                    if (it != pooled.end()) v = &it->second;
                }
                real* dst = out.feats.row(r) + (static_cast<int64_t>(lvl) * gather + slot) * n;
                for (int ch = 0; ch < n; ++ch) dst[ch] = v ? (*v)[ch] : real(0);
                ++slot;
                int i = in.d - 1;
                for (; i >= 0; --i) {
                    if (++delta[i] <= 1) break;
                    delta[i] = -1;
                }
                if (i < 0) break;
            }
        }
    }
    return out;
}

void burn_in_batchnorm(Encoder& enc, const std::vector<SparseTensor>& batches, int passes) {
    check(!batches.empty(), ErrorCode::EmptyInput, "burn-in needs at least one batch");
    ExecContext ctx;
    ctx.training = true;
    ctx.update_bn_stats = true;
    for (int p = 0; p < passes; ++p) {
        NodePtr in = make_node(batches[p % batches.size()]);
        enc.forward(ctx, in, nullptr);
    }
}

std::vector<LayerSummaryRow> encoder_summary(const NetworkSpec& spec, int input_size) {
    std::vector<LayerSummaryRow> rows;
    rows.push_back({"Linear", spec.in_channels, input_size, spec.channels_at(0), input_size});
    int size = input_size;
    for (int j = 0; j < spec.scales; ++j) {
        const int c = spec.channels_at(j);
        rows.push_back({spec.block == BlockStyle::SingleSSC ? "SSC" : "Res2", c, size, c, size});
        if (j + 1 < spec.scales) {
            rows.push_back({"SC", c, size, spec.channels_at(j + 1), size / 2});
            size /= 2;
        }
    }
    if (spec.mode == LatentMode::ToPoint) {
        rows.push_back({"SC", spec.channels_at(spec.scales - 1), size, spec.latent_channels(), 1});
    }
    return rows;
}

std::vector<LayerSummaryRow> decoder_summary(const NetworkSpec& spec, int input_size) {
    std::vector<LayerSummaryRow> rows;
    const int S = spec.scales;
    const bool to_point = spec.mode == LatentMode::ToPoint;
    int size = to_point ? 1 : input_size / spec.downsample_factor();
    const int n_stages = to_point ? S : S - 1;
    for (int i = 0; i < n_stages; ++i) {
        const int target = to_point ? S - 1 - i : S - 2 - i;
        const int c_out = spec.channels_at(target);
        const int c_in = (to_point && i == 0) ? spec.latent_channels() : spec.channels_at(target + 1);
        const int out_size = (to_point && i == 0) ? 4 : size * 2;
        rows.push_back({"TC", c_in, size, c_out, out_size});
        size = out_size;
        const char* blk = spec.block == BlockStyle::SingleSSC ? "SSC" : "Res2";
        rows.push_back({"SSC", c_out, size, c_out, size});
        rows.push_back({"Sparsify", c_out, size, c_out, size});
        rows.push_back({blk, c_out, size, c_out, size});
    }
    rows.push_back({"Linear", spec.channels_at(0), size, spec.in_channels, size});
    return rows;
}

std::vector<LayerSummaryRow> nonconvnet_summary(const NetworkSpec& spec, int input_size) {
    std::vector<LayerSummaryRow> rows;
    const int S = spec.scales;
    const bool to_point = spec.mode == LatentMode::ToPoint;
    int size = to_point ? 1 : input_size / spec.downsample_factor();
    const int transitions = to_point ? S : S - 1;
    for (int i = 0; i < transitions; ++i) {
        const int target = to_point ? S - 1 - i : S - 2 - i;
        const int c_out = spec.channels_at(target);
        const int c_in = (to_point && i == 0) ? spec.latent_channels() : spec.channels_at(target + 1);
        const int out_size = (to_point && i == 0) ? 4 : size * 2;
        rows.push_back({"DC", c_in, size, c_out, out_size});
        size = out_size;
    }
    return rows;
}

void validate_pattern_stack(const PatternStack& ps) {
    for (size_t j = 0; j + 1 < ps.patterns.size(); ++j) {
        const Rulebook& rb = *ps.sc_books[j];
        std::vector<Coord> image;
        std::array<int32_t, kMaxDim> lo{}, hi{}, y{};
        for (const Coord& c : ps.patterns[j]) {
            for (int i = 0; i < rb.d; ++i) {
                const int32_t x = c.pos[i];
                const int32_t num = x - rb.f + rb.s;
                lo[i] = num > 0 ? num / rb.s : 0;
                hi[i] = std::min<int32_t>(rb.out_size[i] - 1, x / rb.s);
            }
            y = lo;
            while (true) {
                image.push_back(Coord(c.batch, y));
                int i = rb.d - 1;
                for (; i >= 0; --i) {
                    if (++y[i] <= hi[i]) break;
                    y[i] = lo[i];
                }
                if (i < 0) break;
            }
        }
        std::sort(image.begin(), image.end());
        image.erase(std::unique(image.begin(), image.end()), image.end());
        check(image == ps.patterns[j + 1], ErrorCode::MissingPattern,
              "pattern stack violates the SC activation chain at level " + std::to_string(j));
    }
}

} // namespace spae
