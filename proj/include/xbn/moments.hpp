#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xbn/matrix.hpp"

namespace xbn {

using Label = std::uint32_t;

/// Floor applied to every standard deviation so the moment-matching transform
/// never divides by zero on a collapsed dimension.
inline constexpr double kStdFloor = 1e-8;

/// n embeddings of dimension d with one class label per row.
struct EmbeddingBatch {
    Matrix vectors;
    std::vector<Label> labels;

    EmbeddingBatch() = default;
    EmbeddingBatch(Matrix v, std::vector<Label> l);

    std::size_t size() const noexcept { return vectors.rows; }
    std::size_t dim() const noexcept { return vectors.cols; }

    bool operator==(const EmbeddingBatch&) const = default;
};

/// Per-dimension mean and (population) standard deviation of an embedding set.
struct MomentStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::size_t count = 0;

    std::size_t dim() const noexcept { return mean.size(); }
};

/// Column means and floored population standard deviations, accumulated in
/// fixed row order. Throws InsufficientSamples for fewer than two rows.
MomentStats compute_moments(const EmbeddingBatch& batch);
MomentStats compute_moments(const Matrix& vectors);

/// Per-dimension affine map that moves `source` from `source_stats` onto
/// `target_stats`: (z - mu) / sigma * sigma' + mu'. Returns a new batch.
EmbeddingBatch xbn_transform(const EmbeddingBatch& source, const MomentStats& source_stats,
                             const MomentStats& target_stats);

/// In-place counterpart used by the memory bank; same arithmetic as xbn_transform.
void xbn_transform_inplace(Matrix& vectors, const MomentStats& source_stats, const MomentStats& target_stats);

/// Sum over dimensions of KL(N(p.mean, p.std^2) || N(q.mean, q.std^2)).
double diag_gaussian_kl(const MomentStats& p, const MomentStats& q);

}  // namespace xbn
