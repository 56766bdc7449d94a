#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "xbn/matrix.hpp"
#include "xbn/moments.hpp"

namespace xbn {

inline constexpr double kNormEpsilon = 1e-12;

/// Fully connected layer y = W x + b, W stored (out x in).
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;

    std::size_t in_dim() const noexcept { return weight.cols; }
    std::size_t out_dim() const noexcept { return weight.rows; }
    bool operator==(const DenseLayer&) const = default;
};

/// Intermediate values of a forward pass, consumed by Embedder::backward.
struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre_activations;  // one per layer
    std::vector<Matrix> activations;      // ReLU outputs of hidden layers
    Matrix unnormalized;                  // last layer output u
    std::vector<double> norms;            // ||u|| + eps per row
    Matrix output;                        // u / norm
};

/// Gradients with the same layout as Embedder::layers().
struct EmbedderGrads {
    std::vector<DenseLayer> layers;
};

/// MLP with ReLU hidden layers, a linear projection to the embedding
/// dimension, and row-wise L2 normalization. With no layers it reduces to
/// normalizing its input.
class Embedder {
public:
    Embedder() = default;
    explicit Embedder(std::size_t input_dim) : input_dim_(input_dim) {}

    /// input_dim -> hidden[0] -> ... -> embed_dim. Weights drawn from
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    static Embedder make(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t embed_dim,
                         std::uint64_t seed);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t output_dim() const noexcept { return layers_.empty() ? input_dim_ : layers_.back().out_dim(); }

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }

    Matrix embed(const Matrix& inputs) const;
    Matrix forward(const Matrix& inputs, ForwardCache& cache) const;
    EmbedderGrads backward(const ForwardCache& cache, const Matrix& grad_z) const;

    EmbedderGrads zero_grads() const;

    bool operator==(const Embedder&) const = default;

private:
    std::size_t input_dim_ = 0;
    std::vector<DenseLayer> layers_;
};

/// Row-wise u / (||u|| + eps).
Matrix l2_normalize_rows(const Matrix& u);

/// Binary checkpoint: "XBNC", u16 version, u16 flags (bit 0: 64-bit floats),
/// u32 input_dim, u32 layer count, then per layer u32 out, u32 in, weights
/// row-major, biases; all little-endian.
void save_checkpoint(const Embedder& model, const std::filesystem::path& path, bool wide = true);
Embedder load_checkpoint(const std::filesystem::path& path);

}  // namespace xbn
