#include "xbn/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

void RetrievalProtocol::validate() const {
    if (ks.empty()) throw Error(ErrorCode::InvalidConfig, "at least one k is required");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
        if (i > 0 && ks[i] <= ks[i - 1]) throw Error(ErrorCode::InvalidConfig, "k values must be strictly ascending");
    }
}

std::vector<std::size_t> nearest_neighbors(const EmbeddingBatch& gallery, std::span<const double> query,
                                           std::size_t k, std::size_t exclude) {
    std::vector<std::size_t> order;
    order.reserve(gallery.size());
    std::vector<double> sims(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g) {
        sims[g] = dot(query, gallery.vectors.row(g));
        if (g != exclude) order.push_back(g);
    }
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
    order.resize(k);
    return order;
}

RecallResult recall_at_k(const EmbeddingBatch& queries, const EmbeddingBatch& gallery,
                         const RetrievalProtocol& protocol) {
    protocol.validate();
    if (queries.dim() != gallery.dim()) throw Error(ErrorCode::DimensionMismatch, "query/gallery dimension mismatch");
    const bool single = protocol.mode == RetrievalMode::SingleSet;
    if (single && queries.size() != gallery.size()) {
        throw Error(ErrorCode::InvalidConfig, "single-set mode requires queries == gallery");
    }
    const std::size_t effective = single ? gallery.size() - std::min<std::size_t>(gallery.size(), 1) : gallery.size();
    const std::size_t kmax = protocol.ks.back();
    if (kmax >= effective) {
        throw Error(ErrorCode::InvalidConfig, "k = " + std::to_string(kmax) + " is not below effective gallery size " +
                                                  std::to_string(effective));
    }

    std::vector<std::size_t> hits(protocol.ks.size(), 0);
    constexpr auto none = static_cast<std::size_t>(-1);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto nn = nearest_neighbors(gallery, queries.vectors.row(q), kmax, single ? q : none);
        // Rank of the first correct neighbour decides every k at once.
        std::size_t first_hit = none;
        for (std::size_t r = 0; r < nn.size(); ++r) {
            if (gallery.labels[nn[r]] == queries.labels[q]) {
                first_hit = r;
                break;
            }
        }
        if (first_hit == none) continue;
        for (std::size_t i = 0; i < protocol.ks.size(); ++i) {
            if (first_hit < protocol.ks[i]) ++hits[i];
        }
    }
    std::map<std::size_t, double> out;
    for (std::size_t i = 0; i < protocol.ks.size(); ++i) {
        out[protocol.ks[i]] = queries.size() == 0 ? 0.0
                                                  : static_cast<double>(hits[i]) / static_cast<double>(queries.size());
    }
    return out;
}

}  // namespace xbn
