#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xbn/memory_bank.hpp"
#include "xbn/moments.hpp"

namespace xbn {

/// Margins of the pair miner, in cosine-distance units.
struct PairMinerConfig {
    double pos_margin = 0.2;
    double neg_margin = 0.8;

    void validate() const;
};

struct IndexPair {
    std::size_t query;
    std::size_t ref;

    bool operator==(const IndexPair&) const = default;
    auto operator<=>(const IndexPair&) const = default;
};

/// Pairs selected between a minibatch (queries) and a reference set. Row i of
/// the minibatch sits at reference row self_offset + i.
struct MinedPairs {
    std::vector<IndexPair> positives;
    std::vector<IndexPair> negatives;
    std::size_t self_offset = 0;
    std::size_t batch_size = 0;
};

/// Loss value and its gradient with respect to each minibatch row.
struct LossOutput {
    double value = 0.0;
    Matrix grad;
};

enum class LossKind { Contrastive, Triplet };

struct LossConfig {
    LossKind kind = LossKind::Contrastive;
    PairMinerConfig miner;
    double triplet_margin = 0.05;
};

enum class XbmVariant { NoXbm, Xbm, XbmStar };

/// 1 - <a, b> for unit vectors. Throws NotNormalized if either norm is off by more than 1e-6.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Full minibatch x reference matrix of cosine distances (no norm checks).
Matrix distance_matrix(const Matrix& queries, const Matrix& reference);

MinedPairs mine_pairs(const EmbeddingBatch& batch, const EmbeddingBatch& reference, const PairMinerConfig& cfg,
                      std::size_t self_offset);
MinedPairs mine_pairs(const Matrix& distances, std::span<const Label> query_labels,
                      std::span<const Label> ref_labels, const PairMinerConfig& cfg, std::size_t self_offset);

/// Hinge loss on mined pairs: mean of [d - pos_margin]+ over positives plus
/// mean of [neg_margin - d]+ over negatives. Reference rows outside the
/// minibatch are constants.
LossOutput contrastive_loss(const EmbeddingBatch& batch, const EmbeddingBatch& reference, const MinedPairs& pairs,
                            const PairMinerConfig& cfg);

/// Triplet loss with cosine distance: per anchor, mean of [d(a,p) - d(a,n) + margin]+
/// over all (p, n) in the reference; then mean over anchors having any triplet.
LossOutput triplet_loss(const EmbeddingBatch& batch, const EmbeddingBatch& reference, double margin,
                        std::size_t self_offset);

/// Mines (for contrastive) and evaluates the configured loss.
LossOutput ranking_loss(const EmbeddingBatch& batch, const EmbeddingBatch& reference, std::size_t self_offset,
                        const LossConfig& cfg);

/// Loss against the cross-batch memory. NoXbm uses the minibatch as its own
/// reference set, Xbm uses bank rows followed by the minibatch, XbmStar sums both.
LossOutput xbm_loss(const EmbeddingBatch& batch, const MemoryBank& bank, const LossConfig& cfg, XbmVariant variant);

}  // namespace xbn
