#include "spae/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace spae {

NodePtr make_node(SparseTensor st) {
    auto n = std::make_shared<Node>();
    n->grad = Matrix(st.feats.rows, st.feats.cols);
    n->st = std::move(st);
    return n;
}

real mse_loss(const SparseTensor& input, const SparseTensor& output) {
    check(input.active() > 0, ErrorCode::EmptyInput, "mse_loss over empty active set");
    check(input.channels == output.channels, ErrorCode::PatternMismatch,
          "mse_loss channel mismatch");
    check(input.coords == output.coords, ErrorCode::PatternMismatch,
          "mse_loss requires identical input/output sparsity patterns");
    real acc = 0;
    for (int64_t r = 0; r < input.active(); ++r) {
        for (int c = 0; c < input.channels; ++c) {
            const real diff = input.feats.at(r, c) - output.feats.at(r, c);
            acc += diff * diff;
        }
    }
    return acc / static_cast<real>(input.active());
}

real sparsifier_loss(const SparsifierRecord& rec) {
    real acc = 0;
    for (int32_t r : rec.kept_rows) {
        const real margin = std::max(real(1) - rec.f_value(r), real(0));
        acc += margin * margin;
    }
    for (int32_t r : rec.dropped_rows) {
        const real margin = std::max(real(1) + rec.f_value(r), real(0));
        acc += margin * margin;
    }
    return acc;
}

LossReport hierarchical_loss(const SparseTensor& input, const NodePtr& output,
                             std::vector<SparsifierRecord>& records,
                             const std::vector<real>& weights, bool monochrome, Tape* tape) {
    check(weights.size() == records.size() + 1, ErrorCode::ShapeMismatch,
          "hierarchical_loss expects one weight for MSE plus one per sparsifier level");
    LossReport report;
    report.term_weights = weights;
    if (monochrome) report.term_weights[0] = 0;

    report.mse = mse_loss(input, output->st);
    report.total = report.term_weights[0] * report.mse;
    for (size_t i = 0; i < records.size(); ++i) {
        const real term = sparsifier_loss(records[i]);
        report.sparsifier_losses.emplace_back(records[i].level, term);
        report.total += report.term_weights[1 + i] * term;
    }

    if (tape) {
        const real w_mse = report.term_weights[0];
        std::vector<real> hinge_w(records.size());
        for (size_t i = 0; i < records.size(); ++i) hinge_w[i] = report.term_weights[1 + i];
        // copy the records and target features so backward stays valid even
        // after the caller's buffers are reused
        auto recs = records;
        Matrix target = input.feats;
        tape->record([out = output, recs = std::move(recs), hinge_w, w_mse,
                      target = std::move(target)]() {
            if (w_mse != real(0)) {
                const real coef = real(2) * w_mse / static_cast<real>(target.rows);
                for (int64_t r = 0; r < out->st.active(); ++r) {
                    for (int c = 0; c < out->st.channels; ++c) {
                        out->grad.at(r, c) += coef * (out->st.feats.at(r, c) - target.at(r, c));
                    }
                }
            }
            for (size_t i = 0; i < recs.size(); ++i) {
                const auto& rec = recs[i];
                const real w = hinge_w[i];
                if (w == real(0)) continue;
                for (int32_t r : rec.kept_rows) {
                    const real margin = std::max(real(1) - rec.f_value(r), real(0));
                    rec.input->grad.at(r, 0) += w * real(-2) * margin;
                }
                for (int32_t r : rec.dropped_rows) {
                    const real margin = std::max(real(1) + rec.f_value(r), real(0));
                    rec.input->grad.at(r, 0) += w * real(2) * margin;
                }
            }
        });
    }
    return report;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (int64_t r = 0; r < logits.rows; ++r) {
        const real* in = logits.row(r);
        real* out = p.row(r);
        real mx = in[0];
        for (int64_t j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
        real z = 0;
        for (int64_t j = 0; j < logits.cols; ++j) {
            out[j] = std::exp(in[j] - mx);
            z += out[j];
        }
        for (int64_t j = 0; j < logits.cols; ++j) out[j] /= z;
    }
    return p;
}

real softmax_cross_entropy(const NodePtr& logits, const std::vector<int>& labels, Tape* tape) {
    const int64_t rows = logits->st.feats.rows;
    check(rows > 0, ErrorCode::EmptyInput, "cross entropy over zero rows");
    check(static_cast<int64_t>(labels.size()) == rows, ErrorCode::ShapeMismatch,
          "one label per logit row required");
    Matrix p = softmax(logits->st.feats);
    real loss = 0;
    for (int64_t r = 0; r < rows; ++r) {
        loss -= std::log(std::max(p.at(r, labels[r]), real(1e-300)));
    }
    loss /= static_cast<real>(rows);

    if (tape) {
        tape->record([logits, p = std::move(p), labels, rows]() {
            const real inv = real(1) / static_cast<real>(rows);
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t j = 0; j < p.cols; ++j) {
                    const real onehot = (j == labels[r]) ? real(1) : real(0);
                    logits->grad.at(r, j) += (p.at(r, j) - onehot) * inv;
                }
            }
        });
    }
    return loss;
}

void Optimizer::step(const std::vector<Param*>& params) {
    ++t_;
    for (Param* p : params) {
        if (cfg_.kind == OptimizerConfig::Kind::Adam) {
            kern::adam_step(cfg_.adam, t_, p->value, p->grad, p->m, p->v);
        } else {
            kern::sgd_step(cfg_.sgd, p->value, p->grad, p->m);
        }
    }
}

} // namespace spae
