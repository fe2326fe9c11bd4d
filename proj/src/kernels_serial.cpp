// Reference implementations of the data-parallel kernels. Plain loops, no
// threading; the OpenMP versions in kernels_omp.cpp must stay bit-identical
// to these (same per-slot accumulation order).

#include <cmath>

#include "spae/kernels.hpp"

namespace spae::kern::serial {

void conv_forward(const GatherPlan& plan, const Matrix& in, const real* kernel, const real* bias,
                  Matrix& out) {
    const int64_t m = in.cols, n = out.cols;
    for (int64_t y = 0; y < out.rows; ++y) {
        real* orow = out.row(y);
        for (int64_t j = 0; j < n; ++j) orow[j] = bias[j];
        for (int64_t it = plan.row_ptr[y]; it < plan.row_ptr[y + 1]; ++it) {
            const auto [o, x] = plan.items[it];
            const real* irow = in.row(x);
            const real* K = kernel + static_cast<int64_t>(o) * m * n;
            for (int64_t c = 0; c < m; ++c) {
                const real a = irow[c];
                const real* Kc = K + c * n;
                for (int64_t j = 0; j < n; ++j) orow[j] += a * Kc[j];
            }
        }
    }
}

void conv_backward_input(const ScatterPlan& plan, const Matrix& dout, const real* kernel,
                         int64_t m, Matrix& din) {
    const int64_t n = dout.cols;
    for (int64_t x = 0; x < din.rows; ++x) {
        real* grow = din.row(x);
        for (int64_t it = plan.row_ptr[x]; it < plan.row_ptr[x + 1]; ++it) {
            const auto [o, y] = plan.items[it];
            const real* drow = dout.row(y);
            const real* K = kernel + static_cast<int64_t>(o) * m * n;
            for (int64_t c = 0; c < m; ++c) {
                const real* Kc = K + c * n;
                real acc = 0;
                for (int64_t j = 0; j < n; ++j) acc += drow[j] * Kc[j];
                grow[c] += acc;
            }
        }
    }
}

void conv_backward_params(const Rulebook& rb, const Matrix& in, const Matrix& dout,
                          real* dkernel, real* dbias) {
    const int64_t m = in.cols, n = dout.cols;
    for (int o = 0; o < rb.offset_count(); ++o) {
        real* dK = dkernel + static_cast<int64_t>(o) * m * n;
        for (const Rule& r : rb.rules[o]) {
            const real* irow = in.row(r.in_row);
            const real* drow = dout.row(r.out_row);
            for (int64_t c = 0; c < m; ++c) {
                const real a = irow[c];
                real* dKc = dK + c * n;
                for (int64_t j = 0; j < n; ++j) dKc[j] += a * drow[j];
            }
        }
    }
    for (int64_t j = 0; j < n; ++j) {
        real acc = 0;
        for (int64_t y = 0; y < dout.rows; ++y) acc += dout.at(y, j);
        dbias[j] += acc;
    }
}

void linear_forward(const Matrix& in, const real* W, const real* bias, Matrix& out) {
    const int64_t m = in.cols, n = out.cols;
    for (int64_t r = 0; r < in.rows; ++r) {
        const real* irow = in.row(r);
        real* orow = out.row(r);
        for (int64_t j = 0; j < n; ++j) orow[j] = bias[j];
        for (int64_t c = 0; c < m; ++c) {
            const real a = irow[c];
            const real* Wc = W + c * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += a * Wc[j];
        }
    }
}

void linear_backward_input(const Matrix& dout, const real* W, Matrix& din) {
    const int64_t m = din.cols, n = dout.cols;
    for (int64_t r = 0; r < dout.rows; ++r) {
        const real* drow = dout.row(r);
        real* grow = din.row(r);
        for (int64_t c = 0; c < m; ++c) {
            const real* Wc = W + c * n;
            real acc = 0;
            for (int64_t j = 0; j < n; ++j) acc += drow[j] * Wc[j];
            grow[c] += acc;
        }
    }
}

void linear_backward_params(const Matrix& in, const Matrix& dout, real* dW, real* db) {
    const int64_t m = in.cols, n = dout.cols;
    for (int64_t c = 0; c < m; ++c) {
        real* dWc = dW + c * n;
        for (int64_t r = 0; r < in.rows; ++r) {
            const real a = in.at(r, c);
            const real* drow = dout.row(r);
            for (int64_t j = 0; j < n; ++j) dWc[j] += a * drow[j];
        }
    }
    for (int64_t j = 0; j < n; ++j) {
        real acc = 0;
        for (int64_t r = 0; r < dout.rows; ++r) acc += dout.at(r, j);
        db[j] += acc;
    }
}

void bn_stats(const Matrix& in, real* mean, real* var) {
    const int64_t rows = in.rows, n = in.cols;
    for (int64_t c = 0; c < n; ++c) {
        real mu = 0;
        for (int64_t r = 0; r < rows; ++r) mu += in.at(r, c);
        mu /= static_cast<real>(rows);
        real s2 = 0;
        for (int64_t r = 0; r < rows; ++r) {
            const real dx = in.at(r, c) - mu;
            s2 += dx * dx;
        }
        mean[c] = mu;
        var[c] = s2 / static_cast<real>(rows);
    }
}

void bn_forward(const Matrix& in, const real* mean, const real* var, const real* scale,
                const real* shift, real eps, Matrix& out) {
    const int64_t n = in.cols;
    for (int64_t r = 0; r < in.rows; ++r) {
        const real* irow = in.row(r);
        real* orow = out.row(r);
        for (int64_t c = 0; c < n; ++c) {
            const real inv = real(1) / std::sqrt(var[c] + eps);
            orow[c] = (irow[c] - mean[c]) * inv * scale[c] + shift[c];
        }
    }
}

void bn_backward(const Matrix& in, const Matrix& dout, const real* mean, const real* var,
                 const real* scale, real eps, bool batch_stats, Matrix& din, real* dscale,
                 real* dshift) {
    const int64_t rows = in.rows, n = in.cols;
    const real M = static_cast<real>(rows);
    for (int64_t c = 0; c < n; ++c) {
        const real inv = real(1) / std::sqrt(var[c] + eps);
        real sum_dy = 0, sum_dy_xhat = 0;
        for (int64_t r = 0; r < rows; ++r) {
            const real dy = dout.at(r, c);
            const real xhat = (in.at(r, c) - mean[c]) * inv;
            sum_dy += dy;
            sum_dy_xhat += dy * xhat;
        }
        dscale[c] += sum_dy_xhat;
        dshift[c] += sum_dy;
        if (batch_stats) {
            for (int64_t r = 0; r < rows; ++r) {
                const real dy = dout.at(r, c);
                const real xhat = (in.at(r, c) - mean[c]) * inv;
                din.at(r, c) += scale[c] * inv * (dy - sum_dy / M - xhat * sum_dy_xhat / M);
            }
        } else {
            for (int64_t r = 0; r < rows; ++r) {
                din.at(r, c) += dout.at(r, c) * scale[c] * inv;
            }
        }
    }
}

void relu_forward(const Matrix& in, Matrix& out) {
    for (int64_t i = 0; i < in.size(); ++i) out.v[i] = in.v[i] > real(0) ? in.v[i] : real(0);
}

void relu_backward(const Matrix& in, const Matrix& dout, Matrix& din) {
    for (int64_t i = 0; i < in.size(); ++i) {
        if (in.v[i] > real(0)) din.v[i] += dout.v[i];
    }
}

void add_rows(const Matrix& a, const Matrix& b, Matrix& out) {
    for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
}

void accumulate(const Matrix& src, Matrix& dst) {
    for (int64_t i = 0; i < src.size(); ++i) dst.v[i] += src.v[i];
}

void adam_step(const AdamConfig& cfg, int64_t t, std::vector<real>& w, const std::vector<real>& g,
               std::vector<real>& m, std::vector<real>& v) {
    const real bc1 = real(1) - std::pow(cfg.beta1, static_cast<real>(t));
    const real bc2 = real(1) - std::pow(cfg.beta2, static_cast<real>(t));
    for (size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (real(1) - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (real(1) - cfg.beta2) * g[i] * g[i];
        const real mhat = m[i] / bc1;
        const real vhat = v[i] / bc2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void sgd_step(const SgdConfig& cfg, std::vector<real>& w, const std::vector<real>& g,
              std::vector<real>& momentum) {
    for (size_t i = 0; i < w.size(); ++i) {
        momentum[i] = cfg.momentum * momentum[i] + g[i];
        w[i] -= cfg.lr * momentum[i];
    }
}

} // namespace spae::kern::serial
