#ifndef SPAE_KERNELS_HPP
#define SPAE_KERNELS_HPP

#include "spae/common.hpp"
#include "spae/rulebook.hpp"

namespace spae::kern {

// Thread control for the parallel path. threads() == 1 selects the serial
// reference implementation; anything larger runs the OpenMP kernels with
// that many threads. Both paths accumulate every output slot in the same
// fixed order, so results are bit-identical across settings.
void set_threads(int n);
int threads();

struct AdamConfig {
    real lr = 1e-3;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
};

struct SgdConfig {
    real lr = 1e-3;
    real momentum = 0.9;
};

// Each kernel exists twice: `serial` is the reference, `par` the OpenMP
// version. The unqualified entry points dispatch on threads().

#define SPAE_KERNEL_SET                                                                              \
    /* rulebook convolution; kernel laid out [offset][m][n], bias length n */                        \
    void conv_forward(const GatherPlan& plan, const Matrix& in, const real* kernel, const real* bias, \
                      Matrix& out);                                                                  \
    void conv_backward_input(const ScatterPlan& plan, const Matrix& dout, const real* kernel,        \
                             int64_t m, Matrix& din);                                                \
    void conv_backward_params(const Rulebook& rb, const Matrix& in, const Matrix& dout,              \
                              real* dkernel, real* dbias);                                           \
    /* per-site linear map; W laid out [m][n] */                                                     \
    void linear_forward(const Matrix& in, const real* W, const real* bias, Matrix& out);             \
    void linear_backward_input(const Matrix& dout, const real* W, Matrix& din);                      \
    void linear_backward_params(const Matrix& in, const Matrix& dout, real* dW, real* db);           \
    /* batch normalization over active rows */                                                       \
    void bn_stats(const Matrix& in, real* mean, real* var);                                          \
    void bn_forward(const Matrix& in, const real* mean, const real* var, const real* scale,          \
                    const real* shift, real eps, Matrix& out);                                       \
    void bn_backward(const Matrix& in, const Matrix& dout, const real* mean, const real* var,        \
                     const real* scale, real eps, bool batch_stats, Matrix& din, real* dscale,       \
                     real* dshift);                                                                  \
    /* elementwise */                                                                                \
    void relu_forward(const Matrix& in, Matrix& out);                                                \
    void relu_backward(const Matrix& in, const Matrix& dout, Matrix& din);                           \
    void add_rows(const Matrix& a, const Matrix& b, Matrix& out);                                    \
    void accumulate(const Matrix& src, Matrix& dst);                                                 \
    /* optimizers, elementwise over one parameter tensor */                                          \
    void adam_step(const AdamConfig& cfg, int64_t t, std::vector<real>& w, const std::vector<real>& g, \
                   std::vector<real>& m, std::vector<real>& v);                                      \
    void sgd_step(const SgdConfig& cfg, std::vector<real>& w, const std::vector<real>& g,            \
                  std::vector<real>& momentum);

namespace serial {
SPAE_KERNEL_SET
}
namespace par {
SPAE_KERNEL_SET
}
SPAE_KERNEL_SET

#undef SPAE_KERNEL_SET

} // namespace spae::kern

#endif
