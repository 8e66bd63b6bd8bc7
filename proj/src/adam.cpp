#include "speckg/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace speckg {

void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state) {
    if (grad.size() != param.numel() || state.m.size() != param.numel()) {
        throw std::invalid_argument("adam_step: size mismatch for parameter '" + state.name +
                                    "' (param " + std::to_string(param.numel()) + ", grad " +
                                    std::to_string(grad.size()) + ", state " +
                                    std::to_string(state.m.size()) + ")");
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw std::runtime_error("adam_step: non-finite gradient for parameter '" +
                                     state.name + "'");
        }
    }
    state.step += 1;
    const AdamConfig& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        param.data[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

} // namespace speckg
