// Dispatch layer: threads() == 1 routes to the serial reference, otherwise
// to the OpenMP kernels.

#include <algorithm>
#include <atomic>

#include "spae/kernels.hpp"

namespace spae::kern {

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) { g_threads.store(std::max(1, n)); }
int threads() { return g_threads.load(); }

namespace {
inline bool use_par() { return threads() > 1; }
}

void conv_forward(const GatherPlan& plan, const Matrix& in, const real* kernel, const real* bias,
                  Matrix& out) {
    use_par() ? par::conv_forward(plan, in, kernel, bias, out)
              : serial::conv_forward(plan, in, kernel, bias, out);
}

void conv_backward_input(const ScatterPlan& plan, const Matrix& dout, const real* kernel,
                         int64_t m, Matrix& din) {
    use_par() ? par::conv_backward_input(plan, dout, kernel, m, din)
              : serial::conv_backward_input(plan, dout, kernel, m, din);
}

void conv_backward_params(const Rulebook& rb, const Matrix& in, const Matrix& dout,
                          real* dkernel, real* dbias) {
    use_par() ? par::conv_backward_params(rb, in, dout, dkernel, dbias)
              : serial::conv_backward_params(rb, in, dout, dkernel, dbias);
}

void linear_forward(const Matrix& in, const real* W, const real* bias, Matrix& out) {
    use_par() ? par::linear_forward(in, W, bias, out) : serial::linear_forward(in, W, bias, out);
}

void linear_backward_input(const Matrix& dout, const real* W, Matrix& din) {
    use_par() ? par::linear_backward_input(dout, W, din)
              : serial::linear_backward_input(dout, W, din);
}

void linear_backward_params(const Matrix& in, const Matrix& dout, real* dW, real* db) {
    use_par() ? par::linear_backward_params(in, dout, dW, db)
              : serial::linear_backward_params(in, dout, dW, db);
}

void bn_stats(const Matrix& in, real* mean, real* var) {
    use_par() ? par::bn_stats(in, mean, var) : serial::bn_stats(in, mean, var);
}

void bn_forward(const Matrix& in, const real* mean, const real* var, const real* scale,
                const real* shift, real eps, Matrix& out) {
    use_par() ? par::bn_forward(in, mean, var, scale, shift, eps, out)
              : serial::bn_forward(in, mean, var, scale, shift, eps, out);
}

void bn_backward(const Matrix& in, const Matrix& dout, const real* mean, const real* var,
                 const real* scale, real eps, bool batch_stats, Matrix& din, real* dscale,
                 real* dshift) {
    use_par() ? par::bn_backward(in, dout, mean, var, scale, eps, batch_stats, din, dscale, dshift)
              : serial::bn_backward(in, dout, mean, var, scale, eps, batch_stats, din, dscale, dshift);
}

void relu_forward(const Matrix& in, Matrix& out) {
    use_par() ? par::relu_forward(in, out) : serial::relu_forward(in, out);
}

void relu_backward(const Matrix& in, const Matrix& dout, Matrix& din) {
    use_par() ? par::relu_backward(in, dout, din) : serial::relu_backward(in, dout, din);
}

void add_rows(const Matrix& a, const Matrix& b, Matrix& out) {
    use_par() ? par::add_rows(a, b, out) : serial::add_rows(a, b, out);
}

void accumulate(const Matrix& src, Matrix& dst) {
    use_par() ? par::accumulate(src, dst) : serial::accumulate(src, dst);
}

void adam_step(const AdamConfig& cfg, int64_t t, std::vector<real>& w, const std::vector<real>& g,
               std::vector<real>& m, std::vector<real>& v) {
    use_par() ? par::adam_step(cfg, t, w, g, m, v) : serial::adam_step(cfg, t, w, g, m, v);
}

void sgd_step(const SgdConfig& cfg, std::vector<real>& w, const std::vector<real>& g,
              std::vector<real>& momentum) {
    use_par() ? par::sgd_step(cfg, w, g, momentum) : serial::sgd_step(cfg, w, g, momentum);
}

} // namespace spae::kern
