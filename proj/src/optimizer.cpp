#include "xbn/optimizer.hpp"

#include <cmath>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning rate must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lr gamma must lie in [0, 1]");
    if (step_epochs == 0) throw Error(ErrorCode::InvalidConfig, "lr step interval must be >= 1 epoch");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidConfig, "momentum must lie in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "betas must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "weight decay must be >= 0");
}

double OptimizerConfig::learning_rate_at(std::size_t epoch) const {
    return learning_rate * std::pow(gamma, static_cast<double>(epoch / step_epochs));
}

Optimizer::Optimizer(const Embedder& model, OptimizerConfig config) : config_(config) {
    config_.validate();
    first_ = model.zero_grads().layers;
    second_ = model.zero_grads().layers;
}

void Optimizer::update_buffer(std::vector<double>& params, const std::vector<double>& grads, std::vector<double>& m,
                              std::vector<double>& v, double lr) {
    switch (config_.kind) {
        case OptimizerKind::Sgd:
            for (std::size_t k = 0; k < params.size(); ++k) {
                const double g = grads[k] + config_.weight_decay * params[k];
                if (config_.momentum > 0.0) {
                    m[k] = config_.momentum * m[k] + g;
                    params[k] -= lr * m[k];
                } else {
                    params[k] -= lr * g;
                }
            }
            break;
        case OptimizerKind::AdamW: {
            const auto t = static_cast<double>(steps_);
            const double c1 = 1.0 - std::pow(config_.beta1, t);
            const double c2 = 1.0 - std::pow(config_.beta2, t);
            for (std::size_t k = 0; k < params.size(); ++k) {
                m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * grads[k];
                v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * grads[k] * grads[k];
                const double mhat = m[k] / c1;
                const double vhat = v[k] / c2;
                params[k] -= lr * (mhat / (std::sqrt(vhat) + config_.epsilon) + config_.weight_decay * params[k]);
            }
            break;
        }
    }
}

void Optimizer::step(Embedder& model, const EmbedderGrads& grads, std::size_t epoch) {
    auto& layers = model.layers();
    if (grads.layers.size() != layers.size()) throw Error(ErrorCode::ShapeMismatch, "gradient layer count mismatch");
    ++steps_;
    const double lr = config_.learning_rate_at(epoch);
    const std::size_t first = frozen_ && !layers.empty() ? layers.size() - 1 : 0;
    for (std::size_t l = first; l < layers.size(); ++l) {
        if (grads.layers[l].weight.data.size() != layers[l].weight.data.size()) {
            throw Error(ErrorCode::ShapeMismatch, "gradient shape mismatch at layer " + std::to_string(l));
        }
        update_buffer(layers[l].weight.data, grads.layers[l].weight.data, first_[l].weight.data,
                      second_[l].weight.data, lr);
        update_buffer(layers[l].bias, grads.layers[l].bias, first_[l].bias, second_[l].bias, lr);
    }
    for (std::size_t l = first; l < layers.size(); ++l) {
        for (double v : layers[l].weight.data) {
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "parameter became non-finite");
        }
    }
}

}  // namespace xbn
