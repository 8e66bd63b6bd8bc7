#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "speckg/tensor.hpp"

namespace speckg {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-parameter optimizer state. Accumulators match the parameter shape;
// the step counter increases by exactly one per update.
struct AdamState {
    std::string name;
    AdamConfig config;
    std::vector<double> m; // first moment
    std::vector<double> v; // second moment
    std::int64_t step = 0;

    AdamState() = default;
    AdamState(std::string param_name, std::size_t numel, AdamConfig cfg)
        : name(std::move(param_name)), config(cfg), m(numel, 0.0), v(numel, 0.0) {}
};

// Standard bias-corrected Adam update, applied in place.
void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state);

} // namespace speckg
