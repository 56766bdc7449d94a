#include "xbn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(splitmix(seed) ^ stream); }

constexpr std::uint64_t kInitStream = 0x1001;
constexpr std::uint64_t kProbeStream = 0x2002;
constexpr std::uint64_t kEpochStream = 0x3003;

}  // namespace

MethodVariant MethodVariant::parse(const std::string& text) {
    MethodVariant v;
    if (text == "noxbm" || text == "no-xbm") {
        v.method = Method::NoXbm;
    } else if (text == "xbm") {
        v.method = Method::Xbm;
    } else if (text == "xbm-star" || text == "xbmstar" || text == "xbm*") {
        v.method = Method::XbmStar;
    } else if (text == "xbn") {
        v.method = Method::Xbn;
    } else if (text == "axbn") {
        v.method = Method::Axbn;
    } else if (text.rfind("ema", 0) == 0) {
        v.method = Method::Ema;
        if (text.size() > 3) {
            if (text[3] != ':') throw Error(ErrorCode::InvalidConfig, "unknown variant '" + text + "'");
            try {
                std::size_t used = 0;
                v.ema_momentum = std::stod(text.substr(4), &used);
                if (used != text.size() - 4) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidConfig, "bad EMA momentum in '" + text + "'");
            }
        }
        if (!(v.ema_momentum >= 0.0 && v.ema_momentum <= 1.0)) {
            throw Error(ErrorCode::InvalidConfig, "EMA momentum must lie in [0, 1]");
        }
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown variant '" + text + "'");
    }
    return v;
}

std::string MethodVariant::name() const {
    switch (method) {
        case Method::NoXbm: return "noxbm";
        case Method::Xbm: return "xbm";
        case Method::XbmStar: return "xbm-star";
        case Method::Xbn: return "xbn";
        case Method::Axbn: return "axbn";
        case Method::Ema: {
            std::string m = std::to_string(ema_momentum);
            m.erase(m.find_last_not_of('0') + 1);
            if (m.back() == '.') m.pop_back();
            return "ema:" + m;
        }
    }
    return "unknown";
}

std::size_t TrainConfig::resolved_capacity(std::size_t train_size) const {
    if (memory_capacity) return *memory_capacity;
    return static_cast<std::size_t>(std::llround(memory_fraction * static_cast<double>(train_size)));
}

void TrainConfig::validate(const MethodVariant& variant, std::size_t train_size) const {
    if (batch_size < 2) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 2");
    if (samples_per_class < 1 || batch_size % samples_per_class != 0) {
        throw Error(ErrorCode::InvalidConfig, "batch size must be divisible by samples per class");
    }
    if (batch_size / samples_per_class < 2) {
        throw Error(ErrorCode::InvalidConfig, "a minibatch needs at least two classes");
    }
    if (!memory_capacity && !(memory_fraction >= 0.0 && memory_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "memory fraction must lie in [0, 1]");
    }
    const std::size_t cap = resolved_capacity(train_size);
    if (variant.uses_memory() && cap != 0 && cap < batch_size) {
        throw Error(ErrorCode::InvalidConfig, "memory capacity " + std::to_string(cap) + " is below the batch size");
    }
    if (embed_dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding dimension must be positive");
    optimizer.validate();
    warmup_optimizer.validate();
    loss.miner.validate();
    if (variant.method == Method::Axbn) kalman.validate();
    RetrievalProtocol{RetrievalMode::SingleSet, eval_ks}.validate();
    if (eval_ks.front() != 1) throw Error(ErrorCode::InvalidConfig, "evaluation ks must start at 1");
}

DriftStats feature_drift(const Matrix& z_now, const Matrix& z_prev) {
    if (z_now.rows != z_prev.rows || z_now.cols != z_prev.cols) {
        throw Error(ErrorCode::ShapeMismatch, "drift probes of different shape");
    }
    DriftStats out;
    if (z_now.rows == 0) return out;
    for (std::size_t i = 0; i < z_now.rows; ++i) {
        const auto a = z_now.row(i);
        const auto b = z_prev.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        const double d = std::sqrt(s);
        out.mean += d;
        out.max = std::max(out.max, d);
    }
    out.mean /= static_cast<double>(z_now.rows);
    return out;
}

DriftStats feature_drift(const Embedder& now, const Embedder& prev, const Matrix& probe_inputs) {
    return feature_drift(now.embed(probe_inputs), prev.embed(probe_inputs));
}

std::vector<std::vector<std::size_t>> sample_pk_batches(const std::vector<Label>& labels, std::size_t batch_size,
                                                        std::size_t k, std::uint64_t seed) {
    if (k == 0 || batch_size == 0 || batch_size % k != 0) {
        throw Error(ErrorCode::InvalidConfig, "batch size must be a positive multiple of samples per class");
    }
    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    const std::size_t per_batch = batch_size / k;
    if (by_class.size() < per_batch) {
        throw Error(ErrorCode::InvalidConfig, "need " + std::to_string(per_batch) + " classes per batch, dataset has " +
                                                  std::to_string(by_class.size()));
    }

    std::mt19937_64 rng(seed);
    std::vector<Label> classes;
    for (const auto& [label, rows] : by_class) classes.push_back(label);
    std::map<Label, std::size_t> cursor;
    for (auto& [label, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        cursor[label] = 0;
    }

    std::vector<Label> class_order;
    std::size_t class_pos = 0;
    auto refill = [&] {
        class_order = classes;
        std::shuffle(class_order.begin(), class_order.end(), rng);
        class_pos = 0;
    };
    refill();

    const std::size_t n_batches = (labels.size() + batch_size - 1) / batch_size;
    std::vector<std::vector<std::size_t>> batches;
    batches.reserve(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        std::vector<Label> chosen;
        while (chosen.size() < per_batch) {
            if (class_pos == class_order.size()) refill();
            const Label c = class_order[class_pos++];
            if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
        }
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        for (Label c : chosen) {
            auto& rows = by_class[c];
            if (rows.size() < k) {
                std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
                for (std::size_t s = 0; s < k; ++s) batch.push_back(rows[pick(rng)]);
                continue;
            }
            auto& at = cursor[c];
            if (at + k > rows.size()) {
                std::shuffle(rows.begin(), rows.end(), rng);
                at = 0;
            }
            for (std::size_t s = 0; s < k; ++s) batch.push_back(rows[at++]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

Trainer::Trainer(const TrainConfig& config, const MethodVariant& variant, const FeatureDataset& dataset)
    : config_(config),
      variant_(variant),
      data_(dataset),
      train_rows_(dataset.indices(Split::Train)),
      model_(Embedder::make(dataset.input_dim(), config.hidden, config.embed_dim, derive_seed(config.seed, kInitStream))),
      warmup_opt_(model_, config.warmup_optimizer),
      main_opt_(model_, config.optimizer),
      bank_(config.resolved_capacity(dataset.indices(Split::Train).size()), config.embed_dim) {
    config_.validate(variant_, train_rows_.size());
    warmup_opt_.freeze_all_but_last();
    if (config_.probe_drift) {
        const auto train_labels = dataset.labels_of(train_rows_);
        const auto probe = sample_pk_batches(train_labels, config_.batch_size, config_.samples_per_class,
                                             derive_seed(config_.seed, kProbeStream));
        for (std::size_t i : probe.front()) probe_rows_.push_back(train_rows_[i]);
        probe_inputs_ = dataset.rows(probe_rows_);
    }
}

IterationRecord Trainer::train_step(const std::vector<std::size_t>& batch_rows, std::size_t epoch, bool warmup) {
    const Matrix inputs = data_.rows(batch_rows);
    ForwardCache cache;
    EmbeddingBatch batch(model_.forward(inputs, cache), data_.labels_of(batch_rows));

    IterationRecord rec;
    rec.epoch = epoch;
    rec.step = step_;
    rec.warmup = warmup;

    // Work on copies so a failure leaves the trainer untouched.
    MemoryBank bank = bank_;
    std::optional<KalmanState> kalman = kalman_;
    LossOutput loss;
    if (warmup || variant_.method == Method::NoXbm) {
        loss = xbm_loss(batch, bank, config_.loss, XbmVariant::NoXbm);
    } else {
        if (variant_.adapts_memory()) {
            // Target statistics come from the normalized minibatch embeddings
            // and are treated as constants.
            const MomentStats observed = compute_moments(batch);
            MomentStats target;
            switch (variant_.method) {
                case Method::Xbn:
                    target = observed;
                    break;
                case Method::Axbn:
                    kalman = kalman ? kalman_step(*kalman, observed, batch.size(), config_.kalman)
                                    : kalman_init(observed, config_.kalman);
                    target = kalman->as_stats();
                    rec.gain = kalman->gain;
                    break;
                case Method::Ema:
                    kalman = kalman ? ema_step(*kalman, observed, variant_.ema_momentum)
                                    : kalman_init(observed, KalmanConfig{});
                    target = kalman->as_stats();
                    rec.gain = 1.0 - variant_.ema_momentum;
                    break;
                default:
                    break;
            }
            if (bank.size() >= 2) bank.adapt(target);
        }
        const XbmVariant loss_variant =
            variant_.method == Method::XbmStar ? XbmVariant::XbmStar
                                               : (bank.capacity() == 0 ? XbmVariant::NoXbm : XbmVariant::Xbm);
        loss = xbm_loss(batch, bank, config_.loss, loss_variant);
        bank.enqueue(batch);
    }
    if (!std::isfinite(loss.value)) {
        throw Error(ErrorCode::NonFiniteLoss, "loss is not finite at step " + std::to_string(step_), step_);
    }

    const EmbedderGrads grads = model_.backward(cache, loss.grad);
    Optimizer& opt = warmup ? warmup_opt_ : main_opt_;
    Embedder updated = model_;
    Optimizer opt_copy = opt;
    opt_copy.step(updated, grads, warmup ? epoch : epoch - config_.warmup_epochs);
    rec.learning_rate = opt_copy.config().learning_rate_at(warmup ? epoch : epoch - config_.warmup_epochs);

    if (config_.probe_drift) {
        const Matrix before = probe_prev_ ? *probe_prev_ : model_.embed(probe_inputs_);
        Matrix after = updated.embed(probe_inputs_);
        const DriftStats drift = feature_drift(after, before);
        rec.mean_drift = drift.mean;
        rec.max_drift = drift.max;
        probe_prev_ = std::move(after);
    }

    model_ = std::move(updated);
    opt = std::move(opt_copy);
    bank_ = std::move(bank);
    kalman_ = std::move(kalman);
    last_loss_ = std::move(loss);
    rec.loss = last_loss_.value;
    rec.bank_size = bank_.size();
    ++step_;
    return rec;
}

std::map<std::size_t, double> Trainer::evaluate() const {
    RetrievalProtocol protocol;
    protocol.ks = config_.eval_ks;
    if (data_.single_set_validation()) {
        const auto rows = data_.indices(Split::ValGallery);
        EmbeddingBatch gallery(model_.embed(data_.rows(rows)), data_.labels_of(rows));
        protocol.mode = RetrievalMode::SingleSet;
        return recall_at_k(gallery, gallery, protocol);
    }
    const auto qrows = data_.indices(Split::ValQuery);
    const auto grows = data_.indices(Split::ValGallery);
    EmbeddingBatch queries(model_.embed(data_.rows(qrows)), data_.labels_of(qrows));
    EmbeddingBatch gallery(model_.embed(data_.rows(grows)), data_.labels_of(grows));
    protocol.mode = RetrievalMode::QueryGallery;
    return recall_at_k(queries, gallery, protocol);
}

TrainResult run_training(const TrainConfig& config, const FeatureDataset& dataset, const MethodVariant& variant,
                         const RecordSink& sink) {
    dataset.validate();
    Trainer trainer(config, variant, dataset);
    const auto& train_rows = trainer.train_rows();
    const auto train_labels = dataset.labels_of(train_rows);

    TrainResult result;
    result.best_model = trainer.model();
    double best_r1 = -1.0;
    const std::size_t total = config.warmup_epochs + config.epochs;
    for (std::size_t epoch = 0; epoch < total; ++epoch) {
        const bool warmup = epoch < config.warmup_epochs;
        const auto batches = sample_pk_batches(train_labels, config.batch_size, config.samples_per_class,
                                               derive_seed(config.seed, kEpochStream + epoch));
        EpochSummary summary;
        summary.epoch = epoch;
        summary.warmup = warmup;
        double drift_mean = 0.0;
        double drift_max = 0.0;
        for (const auto& local : batches) {
            std::vector<std::size_t> rows(local.size());
            for (std::size_t i = 0; i < local.size(); ++i) rows[i] = train_rows[local[i]];
            IterationRecord rec = trainer.train_step(rows, epoch, warmup);
            summary.mean_loss += rec.loss;
            if (rec.mean_drift) {
                drift_mean += *rec.mean_drift;
                drift_max += *rec.max_drift;
            }
            if (sink) sink(rec);
            result.log.push_back(std::move(rec));
        }
        const auto count = static_cast<double>(batches.size());
        summary.mean_loss /= count;
        if (config.probe_drift) {
            summary.mean_drift = drift_mean / count;
            summary.max_drift = drift_max / count;
        }
        summary.recall = trainer.evaluate();
        const double r1 = summary.recall.begin()->second;
        if (r1 > best_r1) {
            best_r1 = r1;
            result.best_epoch = epoch;
            result.best_recall = summary.recall;
            result.best_model = trainer.model();
        }
        result.epochs.push_back(std::move(summary));
    }
    return result;
}

}  // namespace xbn
