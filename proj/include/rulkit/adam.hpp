// Adam optimizer over a named parameter group of a Graph.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "rulkit/graph.hpp"

namespace rulkit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates for one tensor.
struct AdamSlot {
    Tensor m, v;
};

/// Standalone single-tensor update; `step` is the 1-based step count after
/// incrementing.
inline void adam_step(AdamSlot& slot, Tensor& param, const Tensor& grad,
                      const AdamConfig& cfg, std::uint64_t step) {
    if (!param.same_shape(grad))
        throw Error("adam: parameter/gradient shape mismatch " + shape_str(param.shape) + " vs " +
                    shape_str(grad.shape));
    if (slot.m.size() == 0) {
        slot.m = Tensor(param.rows(), param.cols());
        slot.v = Tensor(param.rows(), param.cols());
    }
    if (!slot.m.same_shape(param))
        throw Error("adam: state/parameter shape mismatch " + shape_str(slot.m.shape) + " vs " +
                    shape_str(param.shape));
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data[i];
        slot.m.data[i] = cfg.beta1 * slot.m.data[i] + (1.0 - cfg.beta1) * g;
        slot.v.data[i] = cfg.beta2 * slot.v.data[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = slot.m.data[i] / bc1;
        const double vhat = slot.v.data[i] / bc2;
        param.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

/// Optimizer for a fixed set of named Graph parameters, stepped together.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(AdamConfig cfg, std::vector<std::string> names)
        : cfg_(cfg), names_(std::move(names)) {}

    void step(Graph& g) {
        ++t_;
        for (const auto& name : names_)
            adam_step(slots_[name], g.param_value(name), g.param_grad(name), cfg_, t_);
    }

    std::uint64_t step_count() const { return t_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    AdamConfig cfg_;
    std::vector<std::string> names_;
    std::map<std::string, AdamSlot> slots_;
    std::uint64_t t_ = 0;
};

}  // namespace rulkit
