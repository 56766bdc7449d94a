#include "xbn/embedder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "xbn/error.hpp"

namespace xbn {

Embedder Embedder::make(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t embed_dim,
                        std::uint64_t seed) {
    if (input_dim == 0 || embed_dim == 0) throw Error(ErrorCode::InvalidConfig, "embedder dimensions must be positive");
    Embedder model(input_dim);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(embed_dim);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (widths[l + 1] == 0) throw Error(ErrorCode::InvalidConfig, "hidden width must be positive");
        DenseLayer layer{Matrix(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1], 0.0)};
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& w : layer.weight.data) w = dist(rng);
        model.layers_.push_back(std::move(layer));
    }
    return model;
}

Matrix l2_normalize_rows(const Matrix& u) {
    Matrix z = u;
    for (std::size_t i = 0; i < z.rows; ++i) {
        auto r = z.row(i);
        const double s = std::sqrt(dot(r, r)) + kNormEpsilon;
        for (auto& v : r) v /= s;
    }
    return z;
}

namespace {

// out = in * W^T + b
Matrix affine(const Matrix& in, const DenseLayer& layer) {
    Matrix out(in.rows, layer.out_dim());
    for (std::size_t i = 0; i < in.rows; ++i) {
        const auto x = in.row(i);
        auto y = out.row(i);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) y[o] = dot(layer.weight.row(o), x) + layer.bias[o];
    }
    return out;
}

}  // namespace

Matrix Embedder::forward(const Matrix& inputs, ForwardCache& cache) const {
    if (inputs.cols != input_dim_) {
        throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(inputs.cols) + " columns, embedder expects " +
                                                  std::to_string(input_dim_));
    }
    for (double v : inputs.data) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "embedder input contains NaN or Inf");
    }
    cache.input = inputs;
    cache.pre_activations.clear();
    cache.activations.clear();
    const Matrix* current = &cache.input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        cache.pre_activations.push_back(affine(*current, layers_[l]));
        if (l + 1 < layers_.size()) {
            Matrix act = cache.pre_activations.back();
            for (auto& v : act.data) v = v > 0.0 ? v : 0.0;
            cache.activations.push_back(std::move(act));
            current = &cache.activations.back();
        } else {
            current = &cache.pre_activations.back();
        }
    }
    cache.unnormalized = *current;
    cache.norms.resize(cache.unnormalized.rows);
    cache.output = cache.unnormalized;
    for (std::size_t i = 0; i < cache.output.rows; ++i) {
        auto r = cache.output.row(i);
        cache.norms[i] = std::sqrt(dot(r, r)) + kNormEpsilon;
        for (auto& v : r) v /= cache.norms[i];
    }
    return cache.output;
}

Matrix Embedder::embed(const Matrix& inputs) const {
    ForwardCache cache;
    return forward(inputs, cache);
}

EmbedderGrads Embedder::zero_grads() const {
    EmbedderGrads g;
    for (const auto& layer : layers_) {
        g.layers.push_back({Matrix(layer.out_dim(), layer.in_dim()), std::vector<double>(layer.out_dim(), 0.0)});
    }
    return g;
}

EmbedderGrads Embedder::backward(const ForwardCache& cache, const Matrix& grad_z) const {
    const std::size_t n = cache.output.rows;
    if (grad_z.rows != n || grad_z.cols != output_dim() || cache.pre_activations.size() != layers_.size() ||
        cache.input.cols != input_dim_) {
        throw Error(ErrorCode::ShapeMismatch, "gradient or cache does not match the embedder");
    }
    EmbedderGrads grads = zero_grads();
    if (layers_.empty()) return grads;

    // Through z = u / s, s = ||u|| + eps:
    //   dL/du = g / s - u (u . g) / (||u|| s^2)
    Matrix grad_h(n, output_dim());
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = cache.unnormalized.row(i);
        const auto g = grad_z.row(i);
        const double s = cache.norms[i];
        const double unorm = s - kNormEpsilon;
        const double radial = unorm > 0.0 ? dot(u, g) / (unorm * s * s) : 0.0;
        auto out = grad_h.row(i);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = g[k] / s - u[k] * radial;
    }

    for (std::size_t l = layers_.size(); l-- > 0;) {
        const DenseLayer& layer = layers_[l];
        const Matrix& in = l == 0 ? cache.input : cache.activations[l - 1];
        DenseLayer& gl = grads.layers[l];
        for (std::size_t i = 0; i < n; ++i) {
            const auto gh = grad_h.row(i);
            const auto x = in.row(i);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                if (gh[o] == 0.0) continue;
                auto gw = gl.weight.row(o);
                for (std::size_t k = 0; k < x.size(); ++k) gw[k] += gh[o] * x[k];
                gl.bias[o] += gh[o];
            }
        }
        if (l == 0) break;
        Matrix grad_in(n, layer.in_dim());
        const Matrix& pre = cache.pre_activations[l - 1];
        for (std::size_t i = 0; i < n; ++i) {
            const auto gh = grad_h.row(i);
            auto ga = grad_in.row(i);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                if (gh[o] == 0.0) continue;
                const auto w = layer.weight.row(o);
                for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += gh[o] * w[k];
            }
            const auto p = pre.row(i);
            for (std::size_t k = 0; k < ga.size(); ++k) {
                if (p[k] <= 0.0) ga[k] = 0.0;
            }
        }
        grad_h = std::move(grad_in);
    }
    return grads;
}

namespace {

constexpr char kCheckpointMagic[4] = {'X', 'B', 'N', 'C'};
constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const Embedder& model, const std::filesystem::path& path, bool wide) {
    detail::ByteWriter w;
    w.put_bytes(kCheckpointMagic, 4);
    w.put<std::uint16_t>(kCheckpointVersion);
    w.put<std::uint16_t>(wide ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.input_dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.layers().size()));
    auto put_value = [&](double v) {
        if (wide) {
            w.put<double>(v);
        } else {
            w.put<float>(static_cast<float>(v));
        }
    };
    for (const auto& layer : model.layers()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.out_dim()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.in_dim()));
        for (double v : layer.weight.data) put_value(v);
        for (double v : layer.bias) put_value(v);
    }
    detail::write_file(path, w.bytes());
}

Embedder load_checkpoint(const std::filesystem::path& path) {
    detail::ByteReader r(detail::read_file(path));
    r.require(4, "magic");
    if (std::memcmp(r.here(), kCheckpointMagic, 4) != 0) throw Error(ErrorCode::FormatError, "bad checkpoint magic", 0);
    r.skip(4);
    const std::size_t version_at = r.offset();
    if (r.get<std::uint16_t>("version") != kCheckpointVersion) {
        throw Error(ErrorCode::FormatError, "unsupported checkpoint version", version_at);
    }
    const bool wide = (r.get<std::uint16_t>("flags") & 1u) != 0;
    const std::uint32_t input_dim = r.get<std::uint32_t>("input_dim");
    const std::uint32_t count = r.get<std::uint32_t>("layer count");
    Embedder model(input_dim);
    std::size_t expected_in = input_dim;
    auto get_value = [&]() { return wide ? r.get<double>("parameter") : static_cast<double>(r.get<float>("parameter")); };
    for (std::uint32_t l = 0; l < count; ++l) {
        const std::size_t shape_at = r.offset();
        const std::uint32_t out = r.get<std::uint32_t>("layer rows");
        const std::uint32_t in = r.get<std::uint32_t>("layer cols");
        if (in != expected_in || out == 0) throw Error(ErrorCode::FormatError, "inconsistent layer shape", shape_at);
        r.require((static_cast<std::size_t>(out) * in + out) * (wide ? 8 : 4), "layer parameters");
        DenseLayer layer{Matrix(out, in), std::vector<double>(out)};
        for (auto& v : layer.weight.data) v = get_value();
        for (auto& v : layer.bias) v = get_value();
        for (double v : layer.weight.data) {
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "checkpoint holds non-finite weight");
        }
        model.layers().push_back(std::move(layer));
        expected_in = out;
    }
    if (r.remaining() != 0) throw Error(ErrorCode::FormatError, "trailing bytes after checkpoint", r.offset());
    return model;
}

}  // namespace xbn
