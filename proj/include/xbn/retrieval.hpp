#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "xbn/moments.hpp"

namespace xbn {

enum class RetrievalMode {
    SingleSet,     // queries are the gallery; each query's own row is excluded
    QueryGallery,  // separate query and gallery sets
};

struct RetrievalProtocol {
    RetrievalMode mode = RetrievalMode::SingleSet;
    std::vector<std::size_t> ks{1, 10};

    void validate() const;
};

using RecallResult = std::map<std::size_t, double>;

/// Fraction of queries with at least one same-label item among their k most
/// cosine-similar gallery rows. Ties go to the lower gallery index.
/// Throws InvalidConfig when any k is not smaller than the effective gallery size.
RecallResult recall_at_k(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                         const RetrievalProtocol& protocol);

/// Indices of the k nearest gallery rows for one query (descending similarity).
std::vector<std::size_t> nearest_neighbors(const EmbeddingBatch& gallery, std::span<const double> query,
                                           std::size_t k, std::size_t exclude);

}  // namespace xbn
