#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "xbn/embedder.hpp"
#include "xbn/error.hpp"
#include "xbn/losses.hpp"
#include "xbn/optimizer.hpp"

using namespace xbn;
namespace fs = std::filesystem;

namespace {

std::vector<double*> parameters(Embedder& model) {
    std::vector<double*> out;
    for (auto& layer : model.layers()) {
        for (auto& w : layer.weight.data) out.push_back(&w);
        for (auto& b : layer.bias) out.push_back(&b);
    }
    return out;
}

std::vector<double> flatten(const EmbedderGrads& g) {
    std::vector<double> out;
    for (const auto& layer : g.layers) {
        out.insert(out.end(), layer.weight.data.begin(), layer.weight.data.end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

std::vector<double> fd_params(Embedder& model, const std::function<double()>& f, double h = 1e-5) {
    const auto params = parameters(model);
    std::vector<double> g(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double keep = *params[k];
        *params[k] = keep + h;
        const double up = f();
        *params[k] = keep - h;
        const double down = f();
        *params[k] = keep;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Distance to the nearest ReLU kink, or zero when an output row is close to
/// the origin where the normalization is singular.
double min_abs_preactivation(const ForwardCache& cache) {
    for (double s : cache.norms) {
        if (s < 0.1) return 0.0;
    }
    double m = 1e300;
    for (std::size_t l = 0; l + 1 < cache.pre_activations.size(); ++l) {
        for (double v : cache.pre_activations[l].data) m = std::min(m, std::abs(v));
    }
    return m;
}

double min_threshold_gap(const Matrix& z, const std::vector<Label>& labels, const LossConfig& cfg) {
    double gap = 1e300;
    for (std::size_t i = 0; i < z.rows; ++i) {
        for (std::size_t j = 0; j < z.rows; ++j) {
            const double d = oracle::cos_dist(z, i, z, j);
            if (cfg.kind == LossKind::Contrastive) {
                gap = std::min({gap, std::abs(d - cfg.miner.pos_margin), std::abs(d - cfg.miner.neg_margin)});
            } else if (labels[i] == labels[j] && i != j) {
                for (std::size_t n = 0; n < z.rows; ++n) {
                    if (labels[n] != labels[i]) {
                        gap = std::min(gap, std::abs(d - oracle::cos_dist(z, i, z, n) + cfg.triplet_margin));
                    }
                }
            }
        }
    }
    return gap;
}

}  // namespace

TEST_CASE("outputs are unit norm and shapes follow the config") {
    const auto model = Embedder::make(6, {16, 16}, 3, 1);
    CHECK(model.layers().size() == 3);
    CHECK(model.output_dim() == 3);
    std::mt19937_64 rng(1);
    const auto z = model.embed(oracle::random_matrix(10, 6, rng));
    for (std::size_t i = 0; i < z.rows; ++i) CHECK(std::sqrt(dot(z.row(i), z.row(i))) == doctest::Approx(1.0));
    CHECK(Embedder::make(6, {16, 16}, 3, 1) == model);
    CHECK_FALSE(Embedder::make(6, {16, 16}, 3, 2) == model);
}

TEST_CASE("layerless embedder normalizes its input") {
    const Embedder model(2);
    Matrix x(1, 2);
    x(0, 0) = 3;
    x(0, 1) = 4;
    const auto z = model.embed(x);
    CHECK(z(0, 0) == doctest::Approx(0.6));
    CHECK(z(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("forward input validation") {
    const auto model = Embedder::make(3, {4}, 2, 0);
    Matrix bad(2, 3);
    bad(1, 2) = std::nan("");
    try {
        model.embed(bad);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteInput);
    }
    CHECK_THROWS_AS(model.embed(Matrix(2, 4)), Error);
}

TEST_CASE("backward of a linear readout matches central differences") {
    std::mt19937_64 rng(77);
    int checked = 0;
    for (int attempt = 0; attempt < 1000 && checked < 20; ++attempt) {
        auto model = Embedder::make(5, {6, 4}, 3, attempt);
        const Matrix x = oracle::random_matrix(4, 5, rng);
        const Matrix c = oracle::random_matrix(4, 3, rng);
        ForwardCache cache;
        model.forward(x, cache);
        if (min_abs_preactivation(cache) < 1e-3) continue;
        const auto analytic = flatten(model.backward(cache, c));
        const auto numeric = fd_params(model, [&] {
            const auto z = model.embed(x);
            double s = 0.0;
            for (std::size_t k = 0; k < z.data.size(); ++k) s += c.data[k] * z.data[k];
            return s;
        });
        CHECK(oracle::rel_error(analytic, numeric) < 1e-6);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("loss gradients through the embedder match central differences") {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int attempt = 0; attempt < 400 && checked < 24; ++attempt) {
        auto model = Embedder::make(4, {5}, 3, 100 + attempt);
        const Matrix x = oracle::random_matrix(6, 4, rng);
        const std::vector<Label> labels{0, 0, 0, 1, 1, 1};
        LossConfig cfg;
        cfg.kind = attempt % 2 ? LossKind::Triplet : LossKind::Contrastive;
        ForwardCache cache;
        const Matrix z = model.forward(x, cache);
        if (min_abs_preactivation(cache) < 1e-3 || min_threshold_gap(z, labels, cfg) < 1e-3) continue;
        const MemoryBank empty(4, 3);
        const auto loss = xbm_loss(EmbeddingBatch(z, labels), empty, cfg, XbmVariant::NoXbm);
        if (loss.value == 0.0) continue;
        const auto analytic = flatten(model.backward(cache, loss.grad));
        const auto numeric = fd_params(model, [&] {
            return xbm_loss(EmbeddingBatch(model.embed(x), labels), empty, cfg, XbmVariant::NoXbm).value;
        });
        CHECK(oracle::rel_error(analytic, numeric) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("frozen optimizer only touches the last layer") {
    auto model = Embedder::make(4, {5, 5}, 3, 3);
    const auto before = model;
    auto grads = model.zero_grads();
    for (auto& layer : grads.layers) {
        for (auto& w : layer.weight.data) w = 0.5;
        for (auto& b : layer.bias) b = 0.5;
    }
    OptimizerConfig sgd;
    sgd.kind = OptimizerKind::Sgd;
    sgd.learning_rate = 0.1;
    Optimizer opt(model, sgd);
    opt.freeze_all_but_last();
    opt.step(model, grads, 0);
    CHECK(model.layers()[0] == before.layers()[0]);
    CHECK(model.layers()[1] == before.layers()[1]);
    CHECK(model.layers()[2].weight(0, 0) == doctest::Approx(before.layers()[2].weight(0, 0) - 0.05));
    opt.unfreeze();
    opt.step(model, grads, 0);
    CHECK_FALSE(model.layers()[0] == before.layers()[0]);
}

TEST_CASE("step schedule and config validation") {
    OptimizerConfig cfg;
    cfg.learning_rate = 1.0;
    CHECK(cfg.learning_rate_at(0) == 1.0);
    CHECK(cfg.learning_rate_at(14) == 1.0);
    CHECK(cfg.learning_rate_at(15) == doctest::Approx(0.33));
    CHECK(cfg.learning_rate_at(30) == doctest::Approx(0.33 * 0.33));
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("adamw first step moves each parameter by about lr") {
    auto model = Embedder::make(2, {}, 2, 0);
    const auto before = model;
    auto grads = model.zero_grads();
    grads.layers[0].weight(0, 0) = 3.0;
    grads.layers[0].weight(1, 1) = -0.01;
    OptimizerConfig cfg;
    cfg.learning_rate = 1e-2;
    Optimizer opt(model, cfg);
    opt.step(model, grads, 0);
    CHECK(model.layers()[0].weight(0, 0) == doctest::Approx(before.layers()[0].weight(0, 0) - 1e-2).epsilon(1e-6));
    CHECK(model.layers()[0].weight(1, 1) == doctest::Approx(before.layers()[0].weight(1, 1) + 1e-2).epsilon(1e-4));
    CHECK(model.layers()[0].weight(0, 1) == before.layers()[0].weight(0, 1));
}

TEST_CASE("checkpoint round trip") {
    const auto dir = fs::temp_directory_path() / "xbn_test_embedder";
    fs::create_directories(dir);
    const auto model = Embedder::make(7, {6, 5}, 4, 9);
    save_checkpoint(model, dir / "wide.xbnc");
    CHECK(load_checkpoint(dir / "wide.xbnc") == model);

    save_checkpoint(model, dir / "narrow.xbnc", false);
    const auto narrow = load_checkpoint(dir / "narrow.xbnc");
    CHECK(narrow.layers().size() == 3);
    CHECK(narrow.layers()[1].weight(2, 3) == doctest::Approx(model.layers()[1].weight(2, 3)).epsilon(1e-6));

    {
        std::ofstream f(dir / "bad.xbnc", std::ios::binary);
        f << "NOPE";
    }
    try {
        load_checkpoint(dir / "bad.xbnc");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
        CHECK(e.offset().has_value());
    }
    const auto size = fs::file_size(dir / "wide.xbnc");
    fs::resize_file(dir / "wide.xbnc", size - 3);
    CHECK_THROWS_AS(load_checkpoint(dir / "wide.xbnc"), Error);
    fs::remove_all(dir);
}
