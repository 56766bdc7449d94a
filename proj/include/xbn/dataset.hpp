#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "xbn/matrix.hpp"
#include "xbn/moments.hpp"

namespace xbn {

enum class Split : std::uint8_t { Train = 0, ValQuery = 1, ValGallery = 2 };

enum class Precision { F32, F64 };

/// Raw input features with labels and a split tag per row. When no row is
/// tagged ValQuery, validation is single-set retrieval over the ValGallery rows.
struct FeatureDataset {
    Matrix features;
    std::vector<Label> labels;
    std::vector<Split> splits;
    Precision precision = Precision::F64;

    std::size_t size() const noexcept { return features.rows; }
    std::size_t input_dim() const noexcept { return features.cols; }

    std::vector<std::size_t> indices(Split split) const;
    Matrix rows(const std::vector<std::size_t>& idx) const;
    std::vector<Label> labels_of(const std::vector<std::size_t>& idx) const;
    bool single_set_validation() const;

    /// Shape consistency plus the retrievability rule for query/gallery splits.
    void validate() const;

    bool operator==(const FeatureDataset&) const = default;
};

struct SyntheticConfig {
    std::size_t num_classes = 100;       // training classes
    std::size_t val_classes = 40;        // disjoint validation classes
    std::size_t samples_per_class = 20;
    std::size_t input_dim = 32;
    double spread = 1.0;                 // within-class noise std
    double separation = 1.0;             // std of the class centres
    bool query_gallery = false;          // split validation rows into query/gallery halves
    std::uint64_t seed = 0;

    void validate() const;
};

/// Isotropic Gaussian class centres with isotropic within-class noise. Labels
/// 0..num_classes-1 are training classes, the rest are validation classes.
FeatureDataset generate_synthetic(const SyntheticConfig& cfg);

/// XBNF layout, little-endian:
///   "XBNF" | u16 version | u16 flags (bit 0: 64-bit floats) | u32 n | u32 dim
///   | n*dim floats row-major | n u32 labels | n u8 split tags
void save_features(const FeatureDataset& dataset, const std::filesystem::path& path);
FeatureDataset load_features(const std::filesystem::path& path);

/// Rows of "f1,...,fD,label" (optionally ",split" with 0/1/2 when
/// `with_split` is set). A non-numeric first line is treated as a header.
FeatureDataset load_features_csv(const std::filesystem::path& path, bool with_split = false);
void save_features_csv(const FeatureDataset& dataset, const std::filesystem::path& path, bool with_split = false);

/// Dispatches on extension: ".csv" goes to the CSV reader, anything else to XBNF.
FeatureDataset load_dataset(const std::filesystem::path& path);

}  // namespace xbn
