// Dense reference implementations used as test oracles. These deliberately
// avoid the rulebook machinery: plain d-dimensional loops over dense arrays,
// masked by the layer's activation rule.
#ifndef SPAE_TESTS_ORACLE_HPP
#define SPAE_TESTS_ORACLE_HPP

#include <random>
#include <vector>

#include "spae/layers.hpp"
#include "spae/sparse_tensor.hpp"

namespace spae::oracle {

// strided greedy convolution evaluated at the given active output sites;
// kernel laid out [offset][m][n] with offsets lexicographic over [0,f)^d
DenseTensor dense_sc(const DenseTensor& x, const std::vector<real>& kernel,
                     const std::vector<real>& bias, int n, int f, int s,
                     const std::vector<Coord>& out_active,
                     const std::array<int32_t, kMaxDim>& out_size);

// stride-1 centered convolution at the active sites (offsets over
// [-(f-1)/2,(f-1)/2]^d, zero padding at the border)
DenseTensor dense_ssc(const DenseTensor& x, const std::vector<real>& kernel,
                      const std::vector<real>& bias, int n, int f,
                      const std::vector<Coord>& out_active);

// transpose convolution: every input cell scatters into its f^d children;
// masked to out_active, bias added there. Serves TC and (with the recorded
// fine pattern) DC.
DenseTensor dense_tc(const DenseTensor& x, const std::vector<real>& kernel,
                     const std::vector<real>& bias, int n, int f, int s,
                     const std::vector<Coord>& out_active,
                     const std::array<int32_t, kMaxDim>& out_size);

// one randomized sparse-layer-vs-dense-oracle comparison; returns the
// relative error of the layer output against the masked dense computation
double conv_vs_dense(ConvKind kind, int d, int size, int m, int n, int f, int s,
                     std::mt19937_64& rng);

SparseTensor random_sparse(std::mt19937_64& rng, int d, int size, int channels, double occupancy,
                           int batch = 1);

std::vector<Coord> random_pattern(std::mt19937_64& rng, int d, int size, double occupancy,
                                  int batch = 1);

// worst relative deviation between two dense tensors of equal shape
double max_rel_err(const DenseTensor& a, const DenseTensor& b);

} // namespace spae::oracle

#endif
