#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xbn/dataset.hpp"
#include "xbn/embedder.hpp"
#include "xbn/kalman.hpp"
#include "xbn/losses.hpp"
#include "xbn/memory_bank.hpp"
#include "xbn/optimizer.hpp"
#include "xbn/retrieval.hpp"

namespace xbn {

enum class Method { NoXbm, Xbm, XbmStar, Xbn, Axbn, Ema };

struct MethodVariant {
    Method method = Method::Xbn;
    double ema_momentum = 0.1;

    bool uses_memory() const noexcept { return method != Method::NoXbm; }
    bool adapts_memory() const noexcept {
        return method == Method::Xbn || method == Method::Axbn || method == Method::Ema;
    }

    /// "noxbm", "xbm", "xbm-star", "xbn", "axbn", "ema" or "ema:<momentum>".
    static MethodVariant parse(const std::string& text);
    std::string name() const;
};

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t samples_per_class = 4;
    double memory_fraction = 0.5;
    std::optional<std::size_t> memory_capacity;  // overrides memory_fraction
    std::size_t epochs = 25;
    std::size_t warmup_epochs = 2;
    OptimizerConfig warmup_optimizer{OptimizerKind::Sgd, 1e-3, 0.0, 0.9, 0.999, 1e-8, 0.0, 1.0, 1};
    OptimizerConfig optimizer{};
    KalmanConfig kalman{};
    LossConfig loss{};
    std::vector<std::size_t> hidden{32, 32};
    std::size_t embed_dim = 16;
    bool probe_drift = true;
    std::vector<std::size_t> eval_ks{1, 10};
    std::uint64_t seed = 0;

    void validate(const MethodVariant& variant, std::size_t train_size) const;
    std::size_t resolved_capacity(std::size_t train_size) const;
};

struct IterationRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    bool warmup = false;
    double loss = 0.0;
    std::optional<double> gain;
    std::optional<double> mean_drift;
    std::optional<double> max_drift;
    double learning_rate = 0.0;
    std::size_t bank_size = 0;
};

struct EpochSummary {
    std::size_t epoch = 0;
    bool warmup = false;
    double mean_loss = 0.0;
    std::optional<double> mean_drift;  // epoch average of per-step probe means
    std::optional<double> max_drift;   // epoch average of per-step probe maxima
    std::map<std::size_t, double> recall;
};

struct DriftStats {
    double mean = 0.0;
    double max = 0.0;
};

/// Per-row ||z_now - z_prev|| over the probe inputs, reduced to mean and max.
DriftStats feature_drift(const Embedder& now, const Embedder& prev, const Matrix& probe_inputs);
DriftStats feature_drift(const Matrix& z_now, const Matrix& z_prev);

/// One epoch of P x K minibatches (P = batch_size / k distinct classes, k rows
/// each) over `labels`. Returns ceil(n / batch_size) batches of row indices.
/// Classes with fewer than k rows are sampled with replacement.
std::vector<std::vector<std::size_t>> sample_pk_batches(const std::vector<Label>& labels, std::size_t batch_size,
                                                        std::size_t k, std::uint64_t seed);

/// Mutable state of one training run plus the step logic for every variant.
class Trainer {
public:
    Trainer(const TrainConfig& config, const MethodVariant& variant, const FeatureDataset& dataset);

    /// `batch` indexes rows of the dataset. Warmup steps train only the final
    /// layer with the minibatch-only loss and leave the memory untouched. On any
    /// error the trainer state is unchanged.
    IterationRecord train_step(const std::vector<std::size_t>& batch, std::size_t epoch, bool warmup);

    /// Recall on the validation split with the current parameters.
    std::map<std::size_t, double> evaluate() const;

    const Embedder& model() const noexcept { return model_; }
    const MemoryBank& bank() const noexcept { return bank_; }
    const std::optional<KalmanState>& kalman() const noexcept { return kalman_; }
    const std::vector<std::size_t>& train_rows() const noexcept { return train_rows_; }
    const std::vector<std::size_t>& probe_rows() const noexcept { return probe_rows_; }
    std::size_t steps_taken() const noexcept { return step_; }

    /// Loss of the most recent step (for paired-run comparisons).
    const LossOutput& last_loss() const noexcept { return last_loss_; }

private:
    TrainConfig config_;
    MethodVariant variant_;
    const FeatureDataset& data_;
    std::vector<std::size_t> train_rows_;
    std::vector<std::size_t> probe_rows_;
    Matrix probe_inputs_;
    std::optional<Matrix> probe_prev_;
    Embedder model_;
    Optimizer warmup_opt_;
    Optimizer main_opt_;
    MemoryBank bank_;
    std::optional<KalmanState> kalman_;
    LossOutput last_loss_;
    std::size_t step_ = 0;
};

struct TrainResult {
    Embedder best_model;
    std::size_t best_epoch = 0;
    std::map<std::size_t, double> best_recall;
    std::vector<IterationRecord> log;
    std::vector<EpochSummary> epochs;
};

using RecordSink = std::function<void(const IterationRecord&)>;

/// Warmup epochs (final layer only, SGD) followed by main epochs; recall is
/// evaluated after every epoch and the parameters of the best R@1 epoch are
/// returned. Throws NonFiniteLoss (with the step index) on divergence.
TrainResult run_training(const TrainConfig& config, const FeatureDataset& dataset, const MethodVariant& variant,
                         const RecordSink& sink = {});

}  // namespace xbn
