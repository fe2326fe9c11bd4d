#ifndef SPAE_LAYERS_HPP
#define SPAE_LAYERS_HPP

#include <memory>
#include <random>
#include <string>

#include "spae/autograd.hpp"
#include "spae/rulebook.hpp"

namespace spae {

using Rng = std::mt19937_64;
using RulebookPtr = std::shared_ptr<const Rulebook>;

enum class ConvKind { SC, SSC, TC, DC };

const char* conv_kind_name(ConvKind k);

// Output structure of a rulebook application: coordinates, sizes and index,
// with an empty feature block of the requested channel count.
SparseTensor structure_from_rulebook(const Rulebook& rb, int channels);

/// Sparse convolution over a prebuilt rulebook. Weight layout is one m x n
/// matrix per kernel offset, matching the rulebook's offset ordering.
struct ConvLayer {
    ConvKind kind = ConvKind::SSC;
    int d = 2;
    int f = 3;
    int s = 1;
    int in_ch = 0;
    int out_ch = 0;
    Param kernel; // [f^d][m][n]
    Param bias;   // [n]

    void configure(ConvKind k, int d_, int in_c, int out_c, int f_, int s_, Rng& rng);
    int offsets() const;
    NodePtr forward(ExecContext& ctx, const NodePtr& in, RulebookPtr rb);
};

struct BatchNormState {
    Param scale; // gamma
    Param shift; // beta
    std::vector<real> running_mean;
    std::vector<real> running_var;
    real momentum = 0.9;
    real eps = 1e-5;

    void configure(int channels);
    int channels() const { return static_cast<int>(running_mean.size()); }
    // Statistics are computed over active rows only; train mode updates the
    // running estimates unless the context froze them.
    NodePtr forward(ExecContext& ctx, const NodePtr& in);
};

struct LinearLayer {
    int in_dim = 0;
    int out_dim = 0;
    Param weight; // [m][n]
    Param bias;   // [n]

    void configure(int in_d, int out_d, Rng& rng);
    NodePtr forward(ExecContext& ctx, const NodePtr& in);
};

NodePtr relu(ExecContext& ctx, const NodePtr& in);
NodePtr add(ExecContext& ctx, const NodePtr& a, const NodePtr& b);
NodePtr concat_channels(ExecContext& ctx, const NodePtr& a, const NodePtr& b);

/// Training-mode Sparsify: restores the encoder pattern at this level
/// (which must be a subset of the incoming active set) and records the
/// kept/dropped partition for the hinge loss.
NodePtr sparsify_train(ExecContext& ctx, const NodePtr& in, const std::vector<Coord>& pattern,
                       int level);

/// Test-mode Sparsify: keeps sites whose first feature channel is positive.
NodePtr sparsify_test(ExecContext& ctx, const NodePtr& in);

/// Two conv-norm-relu stages with an identity skip:
/// out = in + SSC/BN/ReLU x2 on the unchanged active set.
struct ResidualBlock {
    ConvLayer conv1, conv2;
    BatchNormState bn1, bn2;

    void configure(int d, int channels, int f, Rng& rng);
    NodePtr forward(ExecContext& ctx, const NodePtr& in);
};

} // namespace spae

#endif
