#ifndef SPAE_MODELS_HPP
#define SPAE_MODELS_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spae/layers.hpp"

namespace spae {

enum class Growth { Doubling, Linear };
enum class BlockStyle { SingleSSC, Residual2 };
enum class LatentMode { ToPoint, FixedFactor };

/// Declarative description of an encoder/decoder pair. `scales` counts
/// spatial levels including the input level; each downsample between levels
/// is an f=s=2 SC. ToPoint appends the f=4,s=1 SC that collapses a 4^d grid
/// to a dimensionless latent; FixedFactor stops at input_size / 2^(scales-1).
struct NetworkSpec {
    int d = 2;
    int k = 16;
    Growth growth = Growth::Doubling;
    BlockStyle block = BlockStyle::SingleSSC;
    int scales = 3;
    LatentMode mode = LatentMode::ToPoint;
    int in_channels = 1;
    int latent_ssc_blocks = 0; // post-processor stack for non-trivial latents

    int channels_at(int level) const {
        return growth == Growth::Doubling ? k << level : k * (level + 1);
    }
    int latent_channels() const {
        int top = channels_at(scales - 1);
        return mode == LatentMode::ToPoint ? 4 * top : top;
    }
    int downsample_factor() const { return 1 << (scales - 1); }
    // spatial size required of (ToPoint) or divisible into (FixedFactor) inputs
    int min_input_size() const {
        return mode == LatentMode::ToPoint ? 4 * downsample_factor() : downsample_factor();
    }
    void validate() const;

    std::string serialize() const;
    static NetworkSpec deserialize(const std::string& text);
};

/// Per-scale active-site sets captured on the encoder pass, fine to coarse,
/// together with the SC rulebooks that produced each transition. Consumed by
/// training-mode Sparsify, DC layers and the hierarchical loss.
struct PatternStack {
    std::vector<std::vector<Coord>> patterns;
    std::vector<std::array<int32_t, kMaxDim>> sizes;
    std::vector<RulebookPtr> sc_books; // transition level j -> j+1
    int levels() const { return static_cast<int>(patterns.size()); }
};

using ParamVisitor = std::function<void(const std::string&, Param&)>;
using BnVisitor = std::function<void(const std::string&, BatchNormState&)>;

// conv -> batch norm -> relu, the uniform block ordering
struct ConvBnRelu {
    ConvLayer conv;
    BatchNormState bn;

    void configure(ConvKind k, int d, int in_c, int out_c, int f, int s, Rng& rng) {
        conv.configure(k, d, in_c, out_c, f, s, rng);
        bn.configure(out_c);
    }
    NodePtr forward(ExecContext& ctx, const NodePtr& in, RulebookPtr rb) {
        return relu(ctx, bn.forward(ctx, conv.forward(ctx, in, rb)));
    }
    void visit_params(const std::string& prefix, const ParamVisitor& fn);
    void visit_bn(const std::string& prefix, const BnVisitor& fn);
};

// One SSC block: either SSC/BN/ReLU or two residual blocks (the
// "2 simple ResNet block" variant).
struct SscBlock {
    BlockStyle style = BlockStyle::SingleSSC;
    ConvLayer conv;
    BatchNormState bn;
    ResidualBlock res1, res2;

    void configure(BlockStyle st, int d, int channels, Rng& rng);
    NodePtr forward(ExecContext& ctx, const NodePtr& in);
    void visit_params(const std::string& prefix, const ParamVisitor& fn);
    void visit_bn(const std::string& prefix, const BnVisitor& fn);
};

class Encoder {
public:
    NetworkSpec spec;
    LinearLayer stem; // in_channels -> channels_at(0), per site
    std::vector<SscBlock> blocks;
    std::vector<ConvBnRelu> downs;
    std::optional<ConvBnRelu> to_point;

    /// Runs the encoder, recording per-scale patterns and SC rulebooks into
    /// `ps` when given. The recorded active sets depend only on the input
    /// pattern, never on weights.
    NodePtr forward(ExecContext& ctx, const NodePtr& input, PatternStack* ps);

    void visit_params(const ParamVisitor& fn);
    void visit_bn(const BnVisitor& fn);
};

// Active sets observed after each Sparsify during a decode, coarse to fine.
struct DecodeTrace {
    std::vector<std::vector<Coord>> patterns;
    std::vector<std::array<int32_t, kMaxDim>> sizes;
};

class Decoder {
public:
    NetworkSpec spec;

    struct Stage {
        ConvBnRelu tc;      // upsample into this level
        ConvLayer pre_ssc;  // bare SSC whose first channel drives Sparsify
        SscBlock post_block;
    };
    std::vector<Stage> stages; // coarse to fine; stage i targets level scales-1-i... see build
    LinearLayer proj;          // channels_at(0) -> in_channels, reconstruction head

    /// threshold = false restores encoder patterns (training semantics;
    /// requires `ps`); threshold = true keeps sites with positive first
    /// feature channel (test semantics; `ps` may be null).
    NodePtr forward(ExecContext& ctx, const NodePtr& latent, const PatternStack* ps,
                    bool threshold, DecodeTrace* trace = nullptr);

    void visit_params(const ParamVisitor& fn);
    void visit_bn(const BnVisitor& fn);
};

class NonConvNet {
public:
    NetworkSpec spec;
    int classes = 2;
    std::vector<SscBlock> latent_blocks; // optional latent-space post-processor
    std::vector<ConvBnRelu> dcs;         // coarse to fine, mirrors the encoder SCs
    LinearLayer head;                    // per-site logits

    /// Per-site logits over the encoder's input pattern. Receptive fields of
    /// the deconvolution stack never overlap, so (in eval mode) the logits at
    /// a site depend only on the latent vector, not on other active sites.
    NodePtr forward(ExecContext& ctx, const NodePtr& latent, const PatternStack& ps);

    void visit_params(const ParamVisitor& fn);
    void visit_bn(const BnVisitor& fn);
};

class UNet {
public:
    NetworkSpec spec;
    int classes = 2;
    LinearLayer stem;
    std::vector<SscBlock> enc_blocks;
    std::vector<ConvBnRelu> downs;
    std::vector<ConvBnRelu> ups;         // DC, coarse to fine
    std::vector<ConvBnRelu> dec_blocks;  // SSC after skip concat, 2c -> c
    LinearLayer head;

    NodePtr forward(ExecContext& ctx, const NodePtr& input);

    void visit_params(const ParamVisitor& fn);
    void visit_bn(const BnVisitor& fn);
};

enum class HeadKind { Linear, Mlp };

class ClassifierHead {
public:
    HeadKind kind = HeadKind::Linear;
    int in_dim = 0;
    int classes = 0;
    int hidden = 512;
    LinearLayer l1, l2, l3;

    NodePtr forward(ExecContext& ctx, const NodePtr& in);
    void visit_params(const ParamVisitor& fn);
};

Encoder build_encoder(const NetworkSpec& spec, Rng& rng);
Decoder build_decoder(const NetworkSpec& spec, Rng& rng);
NonConvNet build_nonconvnet(const NetworkSpec& spec, int classes, Rng& rng);
UNet build_unet(const NetworkSpec& spec, int classes, Rng& rng);
ClassifierHead build_classifier_head(HeadKind kind, int in_dim, int classes, Rng& rng,
                                     int hidden = 512);

/// Multi-scale pooled neighborhood features: for scales 1,2,...,2^(levels-1),
/// average-pool, gather the 3^d neighboring cell vectors at each active
/// site, and concatenate across scales -> 3^d * n * levels channels on the
/// original active set.
SparseTensor shape_context(const SparseTensor& in, int levels);

/// Forward passes in train mode updating batch-norm running statistics only;
/// parameters stay untouched.
void burn_in_batchnorm(Encoder& enc, const std::vector<SparseTensor>& batches, int passes = 100);

// Static size arithmetic for a built network, one row per layer.
struct LayerSummaryRow {
    std::string layer;
    int in_ch;
    int in_size;
    int out_ch;
    int out_size;
};
std::vector<LayerSummaryRow> encoder_summary(const NetworkSpec& spec, int input_size);
std::vector<LayerSummaryRow> decoder_summary(const NetworkSpec& spec, int input_size);
std::vector<LayerSummaryRow> nonconvnet_summary(const NetworkSpec& spec, int input_size);

/// Checks the subset chain: applying the SC activation map to pattern j
/// reproduces pattern j+1 exactly.
void validate_pattern_stack(const PatternStack& ps);

} // namespace spae

#endif
