#include "csm/data_io.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "csm/synth_data.hpp"
#include "testutil.hpp"

#include <fstream>
#include <set>

using namespace csm;

namespace {

void write_raw(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& dst, const std::vector<unsigned char>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

// Tiny 2-image IDX pair with 28x28 images.
void write_mini_idx(const std::string& dir, unsigned char l0 = 7, unsigned char l1 = 0,
                    bool corrupt_magic = false, bool truncate = false) {
    std::vector<unsigned char> img;
    append(img, be32(corrupt_magic ? 0x00000804 : kIdxImagesMagic));
    append(img, be32(2));
    append(img, be32(28));
    append(img, be32(28));
    std::vector<unsigned char> pixels(2 * 28 * 28, 0);
    pixels[0] = 255;                     // image 0, corner (cropped away)
    pixels[5 * 28 + 5] = 128;            // image 0, interior
    pixels[28 * 28 + 14 * 28 + 3] = 51;  // image 1
    append(img, pixels);
    if (truncate) img.resize(img.size() - 10);
    write_raw(dir + "/train-images-idx3-ubyte", img);

    std::vector<unsigned char> lab;
    append(lab, be32(kIdxLabelsMagic));
    append(lab, be32(2));
    lab.push_back(l0);
    lab.push_back(l1);
    write_raw(dir + "/train-labels-idx1-ubyte", lab);
}

}  // namespace

TEST_CASE("idx parsing: values, labels, scaling", "[data]") {
    testutil::TmpDir tmp("idx");
    write_mini_idx(tmp.str());
    Dataset ds = load_mnist(tmp.str());
    ds.validate();
    REQUIRE(ds.size() == 2);
    CHECK(ds.input_dim() == 784);
    CHECK(ds.inputs[0](0) == 1.0);
    CHECK(ds.inputs[0](5 * 28 + 5) == 128.0 / 255.0);
    CHECK(ds.inputs[1](14 * 28 + 3) == 51.0 / 255.0);
    CHECK(ds.label_of(0) == 7);
    CHECK(ds.labels[0](7) == 1.0);
    CHECK(ds.labels[0].sum() == 1.0);
    CHECK(ds.label_of(1) == 0);
    // tiny files keep everything in the training split (2/6 == 0)
    CHECK(ds.train_indices.size() == 2);
    CHECK(ds.val_indices.empty());
    CHECK(ds.checksum != 0);
}

TEST_CASE("idx cropping removes the 4-pixel border", "[data]") {
    testutil::TmpDir tmp("crop");
    write_mini_idx(tmp.str());
    Dataset ds = load_mnist(tmp.str(), true);
    CHECK(ds.input_dim() == 400);
    // (5,5) full-image lands at (1,1) cropped; the corner pixel is gone
    CHECK(ds.inputs[0](1 * 20 + 1) == 128.0 / 255.0);
    CHECK(ds.inputs[0](0) == 0.0);
}

TEST_CASE("idx errors carry file context", "[data]") {
    {
        testutil::TmpDir tmp("badmagic");
        write_mini_idx(tmp.str(), 7, 0, true);
        CHECK_THROWS_WITH(load_mnist(tmp.str()), Catch::Matchers::ContainsSubstring("bad magic"));
    }
    {
        testutil::TmpDir tmp("trunc");
        write_mini_idx(tmp.str(), 7, 0, false, true);
        CHECK_THROWS_WITH(load_mnist(tmp.str()), Catch::Matchers::ContainsSubstring("truncated"));
    }
    {
        testutil::TmpDir tmp("badlabel");
        write_mini_idx(tmp.str(), 12);
        CHECK_THROWS_WITH(load_mnist(tmp.str()),
                          Catch::Matchers::ContainsSubstring("out of range"));
    }
    CHECK_THROWS_AS(load_mnist("/nonexistent-dir"), IoError);
}

TEST_CASE("validation split rule", "[data]") {
    CHECK(detail::validation_count(60000) == 10000);
    CHECK(detail::validation_count(25000) == 10000);
    CHECK(detail::validation_count(6000) == 1000);
    CHECK(detail::validation_count(2) == 0);
}

TEST_CASE("synthetic digits round-trip through the real loader", "[data]") {
    testutil::TmpDir tmp("synth");
    write_synthetic_mnist(tmp.str(), 600, 60, 5);
    Dataset ds = load_mnist(tmp.str());
    ds.validate();
    REQUIRE(ds.size() == 600);
    CHECK(ds.input_dim() == 784);
    CHECK(ds.train_indices.size() == 500);
    CHECK(ds.val_indices.size() == 100);

    double max_px = 0.0, min_px = 1.0;
    std::vector<int> per_class(10, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        max_px = std::max(max_px, ds.inputs[i].maxCoeff());
        min_px = std::min(min_px, ds.inputs[i].minCoeff());
        ++per_class[static_cast<std::size_t>(ds.label_of(i))];
    }
    CHECK(max_px == 1.0);
    CHECK(min_px >= 0.0);
    for (int c = 0; c < 10; ++c) CHECK(per_class[static_cast<std::size_t>(c)] == 60);

    // determinism: regenerating gives identical bytes
    testutil::TmpDir tmp2("synth2");
    write_synthetic_mnist(tmp2.str(), 600, 60, 5);
    Dataset ds2 = load_mnist(tmp2.str());
    CHECK(ds.checksum == ds2.checksum);
    CHECK(ds.inputs[123] == ds2.inputs[123]);
}

TEST_CASE("cifar batches parse with the plane layout", "[data]") {
    testutil::TmpDir tmp("cifar");
    // one handcrafted record: label 3, red plane 10, green 20, blue 30
    std::vector<unsigned char> label{3};
    std::vector<unsigned char> px(3072);
    for (int k = 0; k < 1024; ++k) px[static_cast<std::size_t>(k)] = 10;
    for (int k = 1024; k < 2048; ++k) px[static_cast<std::size_t>(k)] = 20;
    for (int k = 2048; k < 3072; ++k) px[static_cast<std::size_t>(k)] = 30;
    write_cifar_batch(tmp.str() + "/data_batch_1.bin", label, {px});
    write_cifar_batch(tmp.str() + "/test_batch.bin", {1}, {px});

    Dataset ds = load_cifar10(tmp.str());
    ds.validate();
    REQUIRE(ds.size() == 2);
    CHECK(ds.input_dim() == 3072);
    CHECK(ds.train_indices.size() == 1);
    CHECK(ds.val_indices.size() == 1);
    CHECK(ds.label_of(0) == 3);
    CHECK(ds.inputs[0](0) == 10.0 / 255.0);
    CHECK(ds.inputs[0](1024) == 20.0 / 255.0);
    CHECK(ds.inputs[0](3071) == 30.0 / 255.0);
}

TEST_CASE("cifar format errors", "[data]") {
    {
        testutil::TmpDir tmp("cifar_len");
        std::vector<unsigned char> bytes(3072);  // one byte short of a record
        write_raw(tmp.str() + "/data_batch_1.bin", bytes);
        write_raw(tmp.str() + "/test_batch.bin", {});
        CHECK_THROWS_WITH(load_cifar10(tmp.str()),
                          Catch::Matchers::ContainsSubstring("whole number of records"));
    }
    {
        testutil::TmpDir tmp("cifar_label");
        std::vector<unsigned char> bytes(3073, 0);
        bytes[0] = 11;
        write_raw(tmp.str() + "/data_batch_1.bin", bytes);
        write_raw(tmp.str() + "/test_batch.bin", {});
        CHECK_THROWS_WITH(load_cifar10(tmp.str()),
                          Catch::Matchers::ContainsSubstring("out of range"));
    }
    {
        testutil::TmpDir tmp("cifar_missing");
        CHECK_THROWS_AS(load_cifar10(tmp.str()), IoError);
    }
}

TEST_CASE("synthetic cifar round-trips", "[data]") {
    testutil::TmpDir tmp("cifar_synth");
    write_synthetic_cifar10(tmp.str(), 50, 30, 3);
    Dataset ds = load_cifar10(tmp.str());
    ds.validate();
    CHECK(ds.train_indices.size() == 250);
    CHECK(ds.val_indices.size() == 30);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.inputs[i].minCoeff() >= 0.0);
        CHECK(ds.inputs[i].maxCoeff() <= 1.0);
    }
}

TEST_CASE("stratified subset: counts, determinism, disjointness", "[data]") {
    testutil::TmpDir tmp("subset");
    write_synthetic_mnist(tmp.str(), 1200, 300, 9);
    Dataset ds = load_mnist(tmp.str());

    Dataset sub = subset(ds, 500, 100, 42);
    sub.validate();
    CHECK(sub.train_indices.size() == 500);
    CHECK(sub.val_indices.size() == 100);
    std::vector<int> per_class(10, 0);
    for (int idx : sub.train_indices)
        ++per_class[static_cast<std::size_t>(sub.label_of(static_cast<std::size_t>(idx)))];
    for (int c = 0; c < 10; ++c) {
        CHECK(per_class[static_cast<std::size_t>(c)] >= 50);
        CHECK(per_class[static_cast<std::size_t>(c)] <= 51);
    }

    Dataset sub2 = subset(ds, 500, 100, 42);
    CHECK(sub.inputs[7] == sub2.inputs[7]);
    CHECK(sub.checksum == sub2.checksum);
    Dataset sub3 = subset(ds, 500, 100, 43);
    bool all_same = true;
    for (std::size_t i = 0; i < 20; ++i)
        if (sub.inputs[i] != sub3.inputs[i]) all_same = false;
    CHECK_FALSE(all_same);

    CHECK_THROWS_AS(subset(ds, 5000, 100, 1), Error);
}
