#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nci/common.hpp"
#include "nci/tensor.hpp"

namespace nci {

enum class OptKind { sgd, adam };

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-model optimizer state. Moment buffers are aligned 1:1 with the flat
// parameter list handed to init(); step() rejects any other arrangement.
struct OptimizerState {
    OptimizerConfig cfg;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step_count = 0;

    void init(const OptimizerConfig& c, const std::vector<const Tensor*>& params) {
        cfg = c;
        step_count = 0;
        m.clear();
        v.clear();
        if (cfg.kind == OptKind::adam) {
            for (const Tensor* p : params) {
                m.emplace_back(p->shape);
                v.emplace_back(p->shape);
            }
        }
    }

    // In-place update. `what` names the model for divergence diagnostics.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              const std::string& what) {
        if (params.size() != grads.size())
            throw ContractError("optimizer step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
        if (cfg.kind == OptKind::adam && m.size() != params.size())
            throw ContractError("optimizer step: state initialized for " + std::to_string(m.size()) +
                                " tensors, got " + std::to_string(params.size()));
        for (std::size_t t = 0; t < grads.size(); ++t) {
            double worst = 0.0;
            bool finite = true;
            for (double g : grads[t]->data) {
                if (!std::isfinite(g)) finite = false;
                else worst = std::max(worst, std::fabs(g));
            }
            if (!finite)
                throw TrainingDiverged("non-finite gradient in " + what + " tensor " + std::to_string(t) +
                                       " (max finite |g| = " + format_g9(worst) + ")");
        }
        ++step_count;
        if (cfg.kind == OptKind::sgd) {
            for (std::size_t t = 0; t < params.size(); ++t) {
                Tensor& p = *params[t];
                const Tensor& g = *grads[t];
                for (std::size_t i = 0; i < p.numel(); ++i) p.data[i] -= cfg.lr * g.data[i];
            }
            return;
        }
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
        for (std::size_t t = 0; t < params.size(); ++t) {
            Tensor& p = *params[t];
            const Tensor& g = *grads[t];
            Tensor& mt = m[t];
            Tensor& vt = v[t];
            for (std::size_t i = 0; i < p.numel(); ++i) {
                mt.data[i] = cfg.beta1 * mt.data[i] + (1.0 - cfg.beta1) * g.data[i];
                vt.data[i] = cfg.beta2 * vt.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
                const double mhat = mt.data[i] / bc1;
                const double vhat = vt.data[i] / bc2;
                p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }
};

}  // namespace nci
