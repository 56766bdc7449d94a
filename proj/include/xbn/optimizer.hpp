#pragma once

#include <cstddef>
#include <vector>

#include "xbn/embedder.hpp"

namespace xbn {

enum class OptimizerKind { Sgd, AdamW };

/// Update rule plus a step schedule: the learning rate is multiplied by
/// `gamma` every `step_epochs` epochs.
struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::AdamW;
    double learning_rate = 1e-4;
    double momentum = 0.0;  // SGD only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    double gamma = 0.33;
    std::size_t step_epochs = 15;

    void validate() const;
    double learning_rate_at(std::size_t epoch) const;
};

/// Holds per-parameter state (SGD velocity or Adam moments) for one embedder.
/// While frozen, only the final layer is updated and the state of the other
/// layers is left as is.
class Optimizer {
public:
    Optimizer(const Embedder& model, OptimizerConfig config);

    const OptimizerConfig& config() const noexcept { return config_; }

    void freeze_all_but_last() noexcept { frozen_ = true; }
    void unfreeze() noexcept { frozen_ = false; }
    bool frozen() const noexcept { return frozen_; }

    void step(Embedder& model, const EmbedderGrads& grads, std::size_t epoch);

private:
    void update_buffer(std::vector<double>& params, const std::vector<double>& grads, std::vector<double>& m,
                       std::vector<double>& v, double lr);

    OptimizerConfig config_;
    bool frozen_ = false;
    std::size_t steps_ = 0;
    std::vector<DenseLayer> first_;
    std::vector<DenseLayer> second_;
};

}  // namespace xbn
