#include "xbn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

void PairMinerConfig::validate() const {
    if (!(pos_margin >= 0.0 && pos_margin < neg_margin && neg_margin <= 2.0)) {
        throw Error(ErrorCode::InvalidConfig, "pair miner margins must satisfy 0 <= pos < neg <= 2");
    }
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine_distance on vectors of unequal length");
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (std::abs(na - 1.0) > 1e-6 || std::abs(nb - 1.0) > 1e-6) {
        throw Error(ErrorCode::NotNormalized, "cosine_distance expects unit vectors");
    }
    return 1.0 - dot(a, b);
}

Matrix distance_matrix(const Matrix& queries, const Matrix& reference) {
    if (queries.cols != reference.cols) throw Error(ErrorCode::DimensionMismatch, "query/reference dimension mismatch");
    Matrix dist(queries.rows, reference.rows);
    for (std::size_t i = 0; i < queries.rows; ++i) {
        const auto q = queries.row(i);
        auto out = dist.row(i);
        for (std::size_t j = 0; j < reference.rows; ++j) out[j] = 1.0 - dot(q, reference.row(j));
    }
    return dist;
}

MinedPairs mine_pairs(const Matrix& distances, std::span<const Label> query_labels,
                      std::span<const Label> ref_labels, const PairMinerConfig& cfg, std::size_t self_offset) {
    cfg.validate();
    MinedPairs pairs;
    pairs.self_offset = self_offset;
    pairs.batch_size = distances.rows;
    for (std::size_t i = 0; i < distances.rows; ++i) {
        const auto row = distances.row(i);
        const std::size_t self = self_offset + i;
        for (std::size_t j = 0; j < distances.cols; ++j) {
            if (query_labels[i] == ref_labels[j]) {
                if (j != self && row[j] > cfg.pos_margin) pairs.positives.push_back({i, j});
            } else if (row[j] < cfg.neg_margin) {
                pairs.negatives.push_back({i, j});
            }
        }
    }
    return pairs;
}

MinedPairs mine_pairs(const EmbeddingBatch& batch, const EmbeddingBatch& reference, const PairMinerConfig& cfg,
                      std::size_t self_offset) {
    return mine_pairs(distance_matrix(batch.vectors, reference.vectors), batch.labels, reference.labels, cfg,
                      self_offset);
}

namespace {

// Adds `scale * v` to grad row `r`.
void axpy_row(Matrix& grad, std::size_t r, double scale, std::span<const double> v) {
    auto g = grad.row(r);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += scale * v[k];
}

// Index of the minibatch row that reference row `ref` aliases, or npos.
std::size_t batch_row_of(std::size_t ref, std::size_t self_offset, std::size_t n) {
    if (ref >= self_offset && ref < self_offset + n) return ref - self_offset;
    return static_cast<std::size_t>(-1);
}

}  // namespace

LossOutput contrastive_loss(const EmbeddingBatch& batch, const EmbeddingBatch& reference, const MinedPairs& pairs,
                            const PairMinerConfig& cfg) {
    if (batch.dim() != reference.dim()) throw Error(ErrorCode::DimensionMismatch, "batch/reference dimension mismatch");
    const std::size_t n = batch.size();
    LossOutput out;
    out.grad = Matrix(n, batch.dim());
    constexpr auto npos = static_cast<std::size_t>(-1);

    // d = 1 - <zi, zj>, so dd/dzi = -zj and dd/dzj = -zi.
    if (!pairs.positives.empty()) {
        const double w = 1.0 / static_cast<double>(pairs.positives.size());
        double sum = 0.0;
        for (const auto& [i, j] : pairs.positives) {
            const auto zi = batch.vectors.row(i);
            const auto zj = reference.vectors.row(j);
            const double d = 1.0 - dot(zi, zj);
            if (d <= cfg.pos_margin) continue;
            sum += d - cfg.pos_margin;
            axpy_row(out.grad, i, -w, zj);
            if (const auto b = batch_row_of(j, pairs.self_offset, n); b != npos) axpy_row(out.grad, b, -w, zi);
        }
        out.value += w * sum;
    }
    if (!pairs.negatives.empty()) {
        const double w = 1.0 / static_cast<double>(pairs.negatives.size());
        double sum = 0.0;
        for (const auto& [i, j] : pairs.negatives) {
            const auto zi = batch.vectors.row(i);
            const auto zj = reference.vectors.row(j);
            const double d = 1.0 - dot(zi, zj);
            if (d >= cfg.neg_margin) continue;
            sum += cfg.neg_margin - d;
            axpy_row(out.grad, i, w, zj);
            if (const auto b = batch_row_of(j, pairs.self_offset, n); b != npos) axpy_row(out.grad, b, w, zi);
        }
        out.value += w * sum;
    }
    return out;
}

LossOutput triplet_loss(const EmbeddingBatch& batch, const EmbeddingBatch& reference, double margin,
                        std::size_t self_offset) {
    if (batch.dim() != reference.dim()) throw Error(ErrorCode::DimensionMismatch, "batch/reference dimension mismatch");
    if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidConfig, "triplet margin must be >= 0");
    const std::size_t n = batch.size();
    const std::size_t m = reference.size();
    const Matrix dist = distance_matrix(batch.vectors, reference.vectors);
    constexpr auto npos = static_cast<std::size_t>(-1);

    struct Entry {
        double d;
        std::size_t ref;
    };
    // Per anchor: value and, for each reference row, the signed count of
    // active triplets it participates in (+ as positive, - as negative).
    std::vector<double> anchor_value(n, 0.0);
    std::vector<double> anchor_weight(n, 0.0);
    std::vector<std::vector<std::pair<std::size_t, double>>> coeffs(n);
    std::size_t anchors = 0;

    std::vector<Entry> pos, neg;
    std::vector<double> neg_prefix, pos_thresh;
    for (std::size_t i = 0; i < n; ++i) {
        pos.clear();
        neg.clear();
        const auto row = dist.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            if (reference.labels[j] == batch.labels[i]) {
                if (j != self_offset + i) pos.push_back({row[j], j});
            } else {
                neg.push_back({row[j], j});
            }
        }
        if (pos.empty() || neg.empty()) continue;
        ++anchors;
        const double triplets = static_cast<double>(pos.size()) * static_cast<double>(neg.size());

        // A triplet (p, n) is active when d_n < d_p + margin. Sorting both
        // sides lets each count be read off with a binary search.
        std::sort(neg.begin(), neg.end(), [](const Entry& a, const Entry& b) { return a.d < b.d; });
        neg_prefix.assign(neg.size() + 1, 0.0);
        for (std::size_t k = 0; k < neg.size(); ++k) neg_prefix[k + 1] = neg_prefix[k] + neg[k].d;
        pos_thresh.resize(pos.size());
        for (std::size_t k = 0; k < pos.size(); ++k) pos_thresh[k] = pos[k].d + margin;
        std::vector<double> sorted_thresh = pos_thresh;
        std::sort(sorted_thresh.begin(), sorted_thresh.end());

        double value = 0.0;
        for (std::size_t k = 0; k < pos.size(); ++k) {
            const double t = pos_thresh[k];
            const auto active = static_cast<std::size_t>(
                std::lower_bound(neg.begin(), neg.end(), t, [](const Entry& e, double v) { return e.d < v; }) -
                neg.begin());
            value += static_cast<double>(active) * t - neg_prefix[active];
            if (active > 0) coeffs[i].emplace_back(pos[k].ref, static_cast<double>(active));
        }
        for (const auto& e : neg) {
            const auto below = static_cast<std::size_t>(
                std::upper_bound(sorted_thresh.begin(), sorted_thresh.end(), e.d) - sorted_thresh.begin());
            const std::size_t active = sorted_thresh.size() - below;
            if (active > 0) coeffs[i].emplace_back(e.ref, -static_cast<double>(active));
        }
        anchor_value[i] = value / triplets;
        anchor_weight[i] = 1.0 / triplets;
    }

    LossOutput out;
    out.grad = Matrix(n, batch.dim());
    if (anchors == 0) return out;
    const double inv_anchors = 1.0 / static_cast<double>(anchors);
    for (std::size_t i = 0; i < n; ++i) {
        out.value += anchor_value[i];
        const double w = anchor_weight[i] * inv_anchors;
        const auto zi = batch.vectors.row(i);
        // value_i = w * sum c_j * d(i, j) (+ const); dd/dzi = -zj, dd/dzj = -zi.
        for (const auto& [j, c] : coeffs[i]) {
            axpy_row(out.grad, i, -w * c, reference.vectors.row(j));
            if (const auto b = batch_row_of(j, self_offset, n); b != npos) axpy_row(out.grad, b, -w * c, zi);
        }
    }
    out.value *= inv_anchors;
    return out;
}

LossOutput ranking_loss(const EmbeddingBatch& batch, const EmbeddingBatch& reference, std::size_t self_offset,
                        const LossConfig& cfg) {
    switch (cfg.kind) {
        case LossKind::Contrastive: {
            const MinedPairs pairs = mine_pairs(batch, reference, cfg.miner, self_offset);
            return contrastive_loss(batch, reference, pairs, cfg.miner);
        }
        case LossKind::Triplet:
            return triplet_loss(batch, reference, cfg.triplet_margin, self_offset);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown loss kind");
}

LossOutput xbm_loss(const EmbeddingBatch& batch, const MemoryBank& bank, const LossConfig& cfg, XbmVariant variant) {
    switch (variant) {
        case XbmVariant::NoXbm:
            return ranking_loss(batch, batch, 0, cfg);
        case XbmVariant::Xbm:
            return ranking_loss(batch, bank.reference_set(batch), bank.size(), cfg);
        case XbmVariant::XbmStar: {
            LossOutput local = ranking_loss(batch, batch, 0, cfg);
            const LossOutput memory = ranking_loss(batch, bank.reference_set(batch), bank.size(), cfg);
            local.value += memory.value;
            for (std::size_t k = 0; k < local.grad.data.size(); ++k) local.grad.data[k] += memory.grad.data[k];
            return local;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown xbm variant");
}

}  // namespace xbn
