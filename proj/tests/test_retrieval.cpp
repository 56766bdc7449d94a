#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "xbn/error.hpp"
#include "xbn/retrieval.hpp"

using namespace xbn;

namespace {

EmbeddingBatch unit_batch(std::size_t n, std::size_t d, Label classes, std::mt19937_64& rng) {
    return EmbeddingBatch(oracle::unit_rows(oracle::random_matrix(n, d, rng)), oracle::random_labels(n, classes, rng));
}

}  // namespace

TEST_CASE("exact duplicates give perfect recall@1") {
    std::mt19937_64 rng(1);
    const auto q = unit_batch(20, 6, 5, rng);
    EmbeddingBatch g = q;
    const auto other = unit_batch(20, 6, 5, rng);
    g.vectors.data.insert(g.vectors.data.end(), other.vectors.data.begin(), other.vectors.data.end());
    g.vectors.rows += 20;
    g.labels.insert(g.labels.end(), other.labels.begin(), other.labels.end());
    const auto r = recall_at_k(q, g, RetrievalProtocol{RetrievalMode::QueryGallery, {1, 5}});
    CHECK(r.at(1) == 1.0);
    CHECK(r.at(5) == 1.0);
}

TEST_CASE("a label with no other member is never recalled") {
    std::mt19937_64 rng(2);
    auto b = unit_batch(12, 4, 1, rng);
    b.labels.assign(12, 0);
    b.labels[0] = 99;
    const auto r = recall_at_k(b, b, RetrievalProtocol{RetrievalMode::SingleSet, {1, 3, 10}});
    CHECK(r.at(10) == doctest::Approx(11.0 / 12.0));
    for (std::size_t i = 0; i < 12; ++i) {
        const auto nn = nearest_neighbors(b, b.vectors.row(i), 11, i);
        CHECK(std::find(nn.begin(), nn.end(), i) == nn.end());
    }
}

TEST_CASE("k must be below the effective gallery size") {
    std::mt19937_64 rng(3);
    const auto b = unit_batch(5, 3, 2, rng);
    CHECK_NOTHROW(recall_at_k(b, b, RetrievalProtocol{RetrievalMode::SingleSet, {3}}));
    try {
        recall_at_k(b, b, RetrievalProtocol{RetrievalMode::SingleSet, {4}});
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidConfig);
    }
    CHECK_THROWS_AS(recall_at_k(b, b, RetrievalProtocol{RetrievalMode::QueryGallery, {5}}), Error);
    CHECK_THROWS_AS(recall_at_k(b, b, RetrievalProtocol{RetrievalMode::SingleSet, {2, 1}}), Error);
    CHECK_THROWS_AS(recall_at_k(b, b, RetrievalProtocol{RetrievalMode::SingleSet, {0}}), Error);
}

TEST_CASE("ties go to the lower index") {
    Matrix g(3, 2);
    g(0, 0) = 1;
    g(1, 0) = 1;
    g(2, 1) = 1;
    const EmbeddingBatch gallery(g, {0, 1, 2});
    Matrix q(1, 2);
    q(0, 0) = 1;
    const EmbeddingBatch query(q, {1});
    CHECK(nearest_neighbors(gallery, query.vectors.row(0), 2, 99) == std::vector<std::size_t>{0, 1});
    CHECK(recall_at_k(query, gallery, RetrievalProtocol{RetrievalMode::QueryGallery, {1, 2}}).at(1) == 0.0);
    CHECK(recall_at_k(query, gallery, RetrievalProtocol{RetrievalMode::QueryGallery, {1, 2}}).at(2) == 1.0);
}

TEST_CASE("matches the naive full-sort oracle") {
    std::mt19937_64 rng(4);
    const auto b = unit_batch(200, 8, 25, rng);
    const std::vector<std::size_t> ks{1, 2, 5, 10, 50};
    CHECK(recall_at_k(b, b, RetrievalProtocol{RetrievalMode::SingleSet, ks}) ==
          oracle::naive_recall(b.vectors, b.labels, b.vectors, b.labels, ks, true));
    for (int trial = 0; trial < 50; ++trial) {
        const auto q = unit_batch(3 + rng() % 20, 3, 4, rng);
        const auto g = unit_batch(12 + rng() % 20, 3, 4, rng);
        const std::vector<std::size_t> small{1, 3, 10};
        CHECK(recall_at_k(q, g, RetrievalProtocol{RetrievalMode::QueryGallery, small}) ==
              oracle::naive_recall(q.vectors, q.labels, g.vectors, g.labels, small, false));
        CHECK(recall_at_k(g, g, RetrievalProtocol{RetrievalMode::SingleSet, small}) ==
              oracle::naive_recall(g.vectors, g.labels, g.vectors, g.labels, small, true));
    }
}

TEST_CASE("recall is monotone in k and permutation invariant") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto q = unit_batch(15, 5, 6, rng);
        const auto g = unit_batch(40, 5, 6, rng);
        const RetrievalProtocol p{RetrievalMode::QueryGallery, {1, 2, 4, 8, 16, 32}};
        const auto r = recall_at_k(q, g, p);
        double last = 0.0;
        for (const auto& [k, v] : r) {
            CHECK(v >= last);
            CHECK(v <= 1.0);
            last = v;
        }
        std::vector<std::size_t> perm(g.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        EmbeddingBatch shuffled(Matrix(g.size(), g.dim()), std::vector<Label>(g.size()));
        for (std::size_t i = 0; i < perm.size(); ++i) {
            std::copy(g.vectors.row(perm[i]).begin(), g.vectors.row(perm[i]).end(), shuffled.vectors.row(i).begin());
            shuffled.labels[i] = g.labels[perm[i]];
        }
        CHECK(recall_at_k(q, shuffled, p) == r);
    }
}
