#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "xbn/dataset.hpp"
#include "xbn/embedder.hpp"
#include "xbn/error.hpp"
#include "xbn/retrieval.hpp"

using namespace xbn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) { fs::create_directories(path); }
    ~TempDir() { fs::remove_all(path); }
};

SyntheticConfig small_config() {
    SyntheticConfig cfg;
    cfg.num_classes = 6;
    cfg.val_classes = 4;
    cfg.samples_per_class = 5;
    cfg.input_dim = 7;
    cfg.seed = 3;
    return cfg;
}

std::vector<unsigned char> bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("synthetic splits are disjoint and deterministic") {
    const auto ds = generate_synthetic(small_config());
    CHECK(ds.size() == 50);
    std::set<Label> train, val;
    for (std::size_t i = 0; i < ds.size(); ++i) (ds.splits[i] == Split::Train ? train : val).insert(ds.labels[i]);
    CHECK(train.size() == 6);
    CHECK(val.size() == 4);
    for (auto l : val) CHECK_FALSE(train.contains(l));
    CHECK(ds.indices(Split::Train).size() + ds.indices(Split::ValQuery).size() + ds.indices(Split::ValGallery).size() ==
          ds.size());
    CHECK(ds.single_set_validation());
    CHECK(generate_synthetic(small_config()) == ds);
    auto other = small_config();
    other.seed = 4;
    CHECK_FALSE(generate_synthetic(other) == ds);
}

TEST_CASE("query-gallery synthetic data is retrievable") {
    auto cfg = small_config();
    cfg.query_gallery = true;
    const auto ds = generate_synthetic(cfg);
    CHECK_FALSE(ds.single_set_validation());
    CHECK_NOTHROW(ds.validate());
    CHECK(ds.indices(Split::ValQuery).size() == 12);
    CHECK(ds.indices(Split::ValGallery).size() == 8);
}

TEST_CASE("invalid synthetic configs") {
    for (auto mutate : {+[](SyntheticConfig& c) { c.num_classes = 1; }, +[](SyntheticConfig& c) { c.samples_per_class = 1; },
                        +[](SyntheticConfig& c) { c.spread = 0.0; }, +[](SyntheticConfig& c) { c.input_dim = 0; }}) {
        auto cfg = small_config();
        mutate(cfg);
        try {
            generate_synthetic(cfg);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidConfig);
        }
    }
}

TEST_CASE("near-zero spread is separable by a linear embedder") {
    auto cfg = small_config();
    cfg.spread = 1e-9;
    const auto ds = generate_synthetic(cfg);
    const auto val = ds.indices(Split::ValGallery);
    const auto model = Embedder::make(cfg.input_dim, {}, 5, 1);
    const EmbeddingBatch z(model.embed(ds.rows(val)), ds.labels_of(val));
    CHECK(recall_at_k(z, z, RetrievalProtocol{RetrievalMode::SingleSet, {1}}).at(1) == 1.0);
}

TEST_CASE("XBNF round trips bit-exactly") {
    TempDir dir("xbn_test_dataset_rt");
    auto cfg = small_config();
    cfg.query_gallery = true;
    const auto ds = generate_synthetic(cfg);
    save_features(ds, dir.path / "a.xbnf");
    CHECK(load_features(dir.path / "a.xbnf") == ds);
    CHECK(fs::file_size(dir.path / "a.xbnf") == 16 + 50 * 7 * 8 + 50 * 4 + 50);

    auto narrow = ds;
    narrow.precision = Precision::F32;
    for (auto& v : narrow.features.data) v = static_cast<float>(v);
    save_features(narrow, dir.path / "b.xbnf");
    CHECK(load_features(dir.path / "b.xbnf") == narrow);
    CHECK(fs::file_size(dir.path / "b.xbnf") == 16 + 50 * 7 * 4 + 50 * 4 + 50);
}

TEST_CASE("XBNF header layout") {
    TempDir dir("xbn_test_dataset_hdr");
    FeatureDataset ds;
    ds.features = Matrix(1, 1, 1.0);
    ds.labels = {7};
    ds.splits = {Split::ValGallery};
    save_features(ds, dir.path / "one.xbnf");
    const std::vector<unsigned char> expect{'X', 'B', 'N', 'F', 1, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0,
                                            0,   0,   0,   0,   0, 0, 0xf0, 0x3f, 7, 0, 0, 0, 2};
    CHECK(bytes_of(dir.path / "one.xbnf") == expect);
}

TEST_CASE("corrupt XBNF files") {
    TempDir dir("xbn_test_dataset_bad");
    const auto ds = generate_synthetic(small_config());
    save_features(ds, dir.path / "good.xbnf");
    const auto good = bytes_of(dir.path / "good.xbnf");

    auto expect_format = [&](std::vector<unsigned char> b, std::uint64_t offset) {
        write_bytes(dir.path / "bad.xbnf", b);
        try {
            load_features(dir.path / "bad.xbnf");
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::FormatError);
            REQUIRE(e.offset().has_value());
            CHECK(*e.offset() == offset);
        }
    };
    auto bad_magic = good;
    bad_magic[0] = 'Y';
    expect_format(bad_magic, 0);
    auto bad_version = good;
    bad_version[4] = 9;
    expect_format(bad_version, 4);
    expect_format(std::vector<unsigned char>(good.begin(), good.begin() + 100), 16);  // start of the feature block
    auto bad_tag = good;
    bad_tag.back() = 5;
    expect_format(bad_tag, good.size() - 1);
    auto trailing = good;
    trailing.push_back(0);
    expect_format(trailing, good.size());

    auto nan = good;
    const double q = std::nan("");
    std::memcpy(nan.data() + 16, &q, 8);
    write_bytes(dir.path / "nan.xbnf", nan);
    try {
        load_features(dir.path / "nan.xbnf");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteInput);
    }
    CHECK_THROWS_AS(load_features(dir.path / "missing.xbnf"), Error);
}

TEST_CASE("CSV import equals binary import") {
    TempDir dir("xbn_test_dataset_csv");
    auto ds = generate_synthetic(small_config());
    save_features(ds, dir.path / "d.xbnf");
    save_features_csv(ds, dir.path / "d.csv", true);
    CHECK(load_features_csv(dir.path / "d.csv", true) == load_features(dir.path / "d.xbnf"));
    CHECK(load_dataset(dir.path / "d.csv") == ds);

    {
        std::ofstream out(dir.path / "plain.csv");
        out << "f1,f2,label\n0.5,-1,3\n2,0.25,4\n";
    }
    const auto plain = load_features_csv(dir.path / "plain.csv");
    CHECK(plain.size() == 2);
    CHECK(plain.features(1, 1) == 0.25);
    CHECK(plain.labels == std::vector<Label>{3, 4});

    {
        std::ofstream out(dir.path / "bad.csv");
        out << "1,2,3\n1,x,3\n";
    }
    CHECK_THROWS_AS(load_features_csv(dir.path / "bad.csv"), Error);
    {
        std::ofstream out(dir.path / "inf.csv");
        out << "1,inf,3\n";
    }
    try {
        load_features_csv(dir.path / "inf.csv");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteInput);
    }
}

TEST_CASE("validate checks query retrievability") {
    FeatureDataset ds;
    ds.features = Matrix(3, 2);
    ds.labels = {1, 2, 1};
    ds.splits = {Split::ValQuery, Split::ValQuery, Split::ValGallery};
    CHECK_THROWS_AS(ds.validate(), Error);
    ds.labels[1] = 1;
    CHECK_NOTHROW(ds.validate());
    ds.labels.pop_back();
    CHECK_THROWS_AS(ds.validate(), Error);
}
