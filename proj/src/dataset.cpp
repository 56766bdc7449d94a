#include "xbn/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "xbn/error.hpp"

namespace xbn {

std::vector<std::size_t> FeatureDataset::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == split) out.push_back(i);
    }
    return out;
}

Matrix FeatureDataset::rows(const std::vector<std::size_t>& idx) const {
    Matrix out(idx.size(), features.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = features.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<Label> FeatureDataset::labels_of(const std::vector<std::size_t>& idx) const {
    std::vector<Label> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
    return out;
}

bool FeatureDataset::single_set_validation() const {
    for (auto s : splits) {
        if (s == Split::ValQuery) return false;
    }
    return true;
}

void FeatureDataset::validate() const {
    if (labels.size() != features.rows || splits.size() != features.rows) {
        throw Error(ErrorCode::ShapeMismatch, "labels/splits length must equal the number of rows");
    }
    std::set<Label> gallery;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == Split::ValGallery) gallery.insert(labels[i]);
    }
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == Split::ValQuery && !gallery.contains(labels[i])) {
            throw Error(ErrorCode::InvalidConfig, "query label " + std::to_string(labels[i]) + " missing from gallery");
        }
    }
}

void SyntheticConfig::validate() const {
    if (num_classes < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 training classes");
    if (val_classes == 1) throw Error(ErrorCode::InvalidConfig, "need 0 or at least 2 validation classes");
    if (samples_per_class < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 samples per class");
    if (input_dim == 0) throw Error(ErrorCode::InvalidConfig, "input_dim must be positive");
    if (!(spread > 0.0) || !std::isfinite(spread)) throw Error(ErrorCode::InvalidConfig, "spread must be > 0");
    if (!(separation > 0.0) || !std::isfinite(separation)) {
        throw Error(ErrorCode::InvalidConfig, "separation must be > 0");
    }
}

FeatureDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const std::size_t classes = cfg.num_classes + cfg.val_classes;
    const std::size_t n = classes * cfg.samples_per_class;
    FeatureDataset ds;
    ds.features = Matrix(n, cfg.input_dim);
    ds.labels.resize(n);
    ds.splits.resize(n);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> center(cfg.input_dim);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (auto& v : center) v = cfg.separation * normal(rng);
        const bool train = c < cfg.num_classes;
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s, ++row) {
            auto r = ds.features.row(row);
            for (std::size_t j = 0; j < cfg.input_dim; ++j) r[j] = center[j] + cfg.spread * normal(rng);
            ds.labels[row] = static_cast<Label>(c);
            if (train) {
                ds.splits[row] = Split::Train;
            } else if (cfg.query_gallery) {
                ds.splits[row] = s % 2 == 0 ? Split::ValQuery : Split::ValGallery;
            } else {
                ds.splits[row] = Split::ValGallery;
            }
        }
    }
    return ds;
}

namespace {

constexpr char kFeatureMagic[4] = {'X', 'B', 'N', 'F'};
constexpr std::uint16_t kFeatureVersion = 1;

void check_finite(const Matrix& m) {
    for (std::size_t k = 0; k < m.data.size(); ++k) {
        if (!std::isfinite(m.data[k])) {
            throw Error(ErrorCode::NonFiniteInput, "feature row " + std::to_string(k / std::max<std::size_t>(m.cols, 1)) +
                                                       " contains NaN or Inf");
        }
    }
}

}  // namespace

void save_features(const FeatureDataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    check_finite(dataset.features);
    const bool wide = dataset.precision == Precision::F64;
    detail::ByteWriter w;
    w.put_bytes(kFeatureMagic, 4);
    w.put<std::uint16_t>(kFeatureVersion);
    w.put<std::uint16_t>(wide ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.input_dim()));
    for (double v : dataset.features.data) {
        if (wide) {
            w.put<double>(v);
        } else {
            w.put<float>(static_cast<float>(v));
        }
    }
    for (Label l : dataset.labels) w.put<std::uint32_t>(l);
    for (Split s : dataset.splits) w.put<std::uint8_t>(static_cast<std::uint8_t>(s));
    detail::write_file(path, w.bytes());
}

FeatureDataset load_features(const std::filesystem::path& path) {
    detail::ByteReader r(detail::read_file(path));
    r.require(4, "magic");
    if (std::memcmp(r.here(), kFeatureMagic, 4) != 0) throw Error(ErrorCode::FormatError, "bad XBNF magic", 0);
    r.skip(4);
    const std::size_t version_at = r.offset();
    if (r.get<std::uint16_t>("version") != kFeatureVersion) {
        throw Error(ErrorCode::FormatError, "unsupported XBNF version", version_at);
    }
    const std::size_t flags_at = r.offset();
    const std::uint16_t flags = r.get<std::uint16_t>("flags");
    if ((flags & ~1u) != 0) throw Error(ErrorCode::FormatError, "unknown XBNF flags", flags_at);
    const bool wide = (flags & 1u) != 0;
    const std::uint32_t n = r.get<std::uint32_t>("row count");
    const std::uint32_t dim = r.get<std::uint32_t>("input_dim");
    const std::size_t width = wide ? 8 : 4;
    r.require(static_cast<std::size_t>(n) * dim * width, "features");

    FeatureDataset ds;
    ds.precision = wide ? Precision::F64 : Precision::F32;
    ds.features = Matrix(n, dim);
    for (auto& v : ds.features.data) v = wide ? r.get<double>("feature") : static_cast<double>(r.get<float>("feature"));
    check_finite(ds.features);
    r.require(static_cast<std::size_t>(n) * 5, "labels and split tags");
    ds.labels.resize(n);
    for (auto& l : ds.labels) l = r.get<std::uint32_t>("label");
    ds.splits.resize(n);
    for (auto& s : ds.splits) {
        const std::size_t at = r.offset();
        const auto tag = r.get<std::uint8_t>("split tag");
        if (tag > 2) throw Error(ErrorCode::FormatError, "invalid split tag " + std::to_string(tag), at);
        s = static_cast<Split>(tag);
    }
    if (r.remaining() != 0) throw Error(ErrorCode::FormatError, "trailing bytes after XBNF payload", r.offset());
    ds.validate();
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    const char* begin = text.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

}  // namespace

FeatureDataset load_features_csv(const std::filesystem::path& path, bool with_split) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    FeatureDataset ds;
    ds.precision = Precision::F64;
    std::string line;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    std::size_t dim = 0;
    bool first = true;
    bool header_checked = false;
    const std::size_t trailing = with_split ? 2 : 1;
    while (std::getline(in, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        double probe;
        if (!header_checked) {
            header_checked = true;
            if (!parse_double(fields.front(), probe)) continue;  // header
        }
        if (fields.size() <= trailing) {
            throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + " has too few fields", line_offset);
        }
        if (first) {
            dim = fields.size() - trailing;
            first = false;
        } else if (fields.size() - trailing != dim) {
            throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + " has inconsistent field count",
                        line_offset);
        }
        for (std::size_t j = 0; j < dim; ++j) {
            double v;
            if (!parse_double(fields[j], v)) {
                throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": bad number '" + fields[j] + "'",
                            line_offset);
            }
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteInput, "line " + std::to_string(line_no) + " contains NaN or Inf");
            }
            ds.features.data.push_back(v);
        }
        double label;
        if (!parse_double(fields[dim], label) || label < 0 || label != std::floor(label) || label > 4294967295.0) {
            throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": bad label", line_offset);
        }
        ds.labels.push_back(static_cast<Label>(label));
        Split split = Split::Train;
        if (with_split) {
            double tag;
            if (!parse_double(fields[dim + 1], tag) || (tag != 0 && tag != 1 && tag != 2)) {
                throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": bad split tag", line_offset);
            }
            split = static_cast<Split>(static_cast<int>(tag));
        }
        ds.splits.push_back(split);
    }
    ds.features.rows = ds.labels.size();
    ds.features.cols = dim;
    ds.validate();
    return ds;
}

void save_features_csv(const FeatureDataset& dataset, const std::filesystem::path& path, bool with_split) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot create " + path.string());
    char buf[64];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double v : dataset.features.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            out << buf;
        }
        out << dataset.labels[i];
        if (with_split) out << ',' << static_cast<int>(dataset.splits[i]);
        out << '\n';
    }
}

FeatureDataset load_dataset(const std::filesystem::path& path) {
    if (path.extension() == ".csv") return load_features_csv(path, true);
    return load_features(path);
}

}  // namespace xbn
