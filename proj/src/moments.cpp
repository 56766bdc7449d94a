#include "xbn/moments.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

EmbeddingBatch::EmbeddingBatch(Matrix v, std::vector<Label> l) : vectors(std::move(v)), labels(std::move(l)) {
    if (labels.size() != vectors.rows) {
        throw Error(ErrorCode::ShapeMismatch, "labels length " + std::to_string(labels.size()) +
                                                  " != rows " + std::to_string(vectors.rows));
    }
}

MomentStats compute_moments(const Matrix& vectors) {
    const std::size_t n = vectors.rows;
    const std::size_t d = vectors.cols;
    if (n < 2) {
        throw Error(ErrorCode::InsufficientSamples, "moments need at least 2 rows, got " + std::to_string(n));
    }
    MomentStats stats;
    stats.count = n;
    stats.mean.assign(d, 0.0);
    stats.std.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = vectors.row(i);
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += r[j];
    }
    for (auto& m : stats.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = vectors.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double c = r[j] - stats.mean[j];
            stats.std[j] += c * c;
        }
    }
    for (auto& s : stats.std) s = std::max(kStdFloor, std::sqrt(s / static_cast<double>(n)));
    return stats;
}

MomentStats compute_moments(const EmbeddingBatch& batch) { return compute_moments(batch.vectors); }

namespace {

void check_dims(std::size_t d, const MomentStats& a, const MomentStats& b) {
    if (a.mean.size() != d || b.mean.size() != d || a.std.size() != d || b.std.size() != d) {
        throw Error(ErrorCode::DimensionMismatch, "stats dimension does not match embedding dimension " +
                                                      std::to_string(d));
    }
}

}  // namespace

void xbn_transform_inplace(Matrix& vectors, const MomentStats& source_stats, const MomentStats& target_stats) {
    const std::size_t d = vectors.cols;
    check_dims(d, source_stats, target_stats);
    for (std::size_t i = 0; i < vectors.rows; ++i) {
        auto r = vectors.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            r[j] = (r[j] - source_stats.mean[j]) / source_stats.std[j] * target_stats.std[j] + target_stats.mean[j];
        }
    }
}

EmbeddingBatch xbn_transform(const EmbeddingBatch& source, const MomentStats& source_stats,
                             const MomentStats& target_stats) {
    EmbeddingBatch out = source;
    xbn_transform_inplace(out.vectors, source_stats, target_stats);
    return out;
}

double diag_gaussian_kl(const MomentStats& p, const MomentStats& q) {
    if (p.mean.size() != q.mean.size() || p.std.size() != q.std.size() || p.mean.size() != p.std.size()) {
        throw Error(ErrorCode::DimensionMismatch, "KL between stats of different dimension");
    }
    double kl = 0.0;
    for (std::size_t j = 0; j < p.mean.size(); ++j) {
        const double ratio = p.std[j] / q.std[j];
        const double diff = (p.mean[j] - q.mean[j]) / q.std[j];
        // log(sq/sp) + (sp^2 + (mp-mq)^2) / (2 sq^2) - 1/2
        kl += -std::log(ratio) + 0.5 * (ratio * ratio + diff * diff) - 0.5;
    }
    return std::max(0.0, kl);
}

}  // namespace xbn
