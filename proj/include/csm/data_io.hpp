#pragma once

// Dataset loading: IDX image/label files, CIFAR-10 binary batches, one-hot
// labels, train/validation splits, and stratified subsetting. Writers for
// both formats are included for fixtures and offline demos.

#include "csm/common.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace csm {

constexpr int kNumClasses = 10;

struct Dataset {
    std::vector<Vec> inputs;  // values in [0,1]
    std::vector<Vec> labels;  // one-hot, kNumClasses wide
    std::vector<int> train_indices;
    std::vector<int> val_indices;
    std::string source;
    std::uint64_t checksum = 0;  // FNV-1a over the source bytes

    std::size_t size() const { return inputs.size(); }
    int input_dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].size()); }

    int label_of(std::size_t i) const {
        int best = 0;
        labels[i].maxCoeff(&best);
        return best;
    }

    void validate() const {
        if (inputs.size() != labels.size()) throw ShapeError("dataset: inputs/labels count differ");
        const int dim = input_dim();
        for (const Vec& x : inputs)
            if (x.size() != dim) throw ShapeError("dataset: input dimension not uniform");
        for (const Vec& z : labels) {
            if (z.size() != kNumClasses || std::abs(z.sum() - 1.0) > 1e-12 ||
                z.maxCoeff() != 1.0 || z.minCoeff() != 0.0)
                throw DomainError("dataset: labels must be one-hot");
        }
        for (int i : train_indices)
            for (int j : val_indices)
                if (i == j) throw DomainError("dataset: train/validation overlap at " +
                                              std::to_string(i));
    }
};

inline Vec one_hot(int label) {
    Vec z = Vec::Zero(kNumClasses);
    z(label) = 1.0;
    return z;
}

namespace detail {

inline std::uint64_t fnv1a(const std::vector<unsigned char>& bytes, std::uint64_t h) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                               const std::string& file) {
    if (off + 4 > b.size())
        throw ParseError(file + ": truncated at byte offset " + std::to_string(off));
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

// Validation tail: the conventional 10k of a 60k training file; proportional
// (1/6) for smaller fixture files.
inline std::size_t validation_count(std::size_t total) {
    return total >= 20000 ? 10000 : total / 6;
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Loads `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` from `dir`.
/// Pixels scale to [0,1] by /255; `crop` drops a 4-pixel border (28x28 ->
/// 20x20). The trailing tenth of a standard 60k file becomes the validation
/// split.
inline Dataset load_mnist(const std::string& dir, bool crop = false) {
    namespace fs = std::filesystem;
    const std::string images_path = (fs::path(dir) / "train-images-idx3-ubyte").string();
    const std::string labels_path = (fs::path(dir) / "train-labels-idx1-ubyte").string();
    const std::vector<unsigned char> ib = detail::read_file(images_path);
    const std::vector<unsigned char> lb = detail::read_file(labels_path);

    char magic_msg[64];
    const std::uint32_t im = detail::read_be32(ib, 0, images_path);
    if (im != kIdxImagesMagic) {
        std::snprintf(magic_msg, sizeof(magic_msg), "bad magic 0x%08x at byte offset 0", im);
        throw ParseError(images_path + ": " + magic_msg);
    }
    const std::uint32_t lm = detail::read_be32(lb, 0, labels_path);
    if (lm != kIdxLabelsMagic) {
        std::snprintf(magic_msg, sizeof(magic_msg), "bad magic 0x%08x at byte offset 0", lm);
        throw ParseError(labels_path + ": " + magic_msg);
    }

    const std::uint32_t count = detail::read_be32(ib, 4, images_path);
    const std::uint32_t rows = detail::read_be32(ib, 8, images_path);
    const std::uint32_t cols = detail::read_be32(ib, 12, images_path);
    const std::uint32_t label_count = detail::read_be32(lb, 4, labels_path);
    if (count != label_count)
        throw ParseError(images_path + ": image count " + std::to_string(count) +
                         " != label count " + std::to_string(label_count));
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (ib.size() != 16 + static_cast<std::size_t>(count) * pixels)
        throw ParseError(images_path + ": truncated at byte offset " + std::to_string(ib.size()));
    if (lb.size() != 8 + static_cast<std::size_t>(count))
        throw ParseError(labels_path + ": truncated at byte offset " + std::to_string(lb.size()));
    if (crop && (rows != 28 || cols != 28))
        throw ParseError(images_path + ": crop expects 28x28 images");

    Dataset ds;
    ds.source = images_path + ";" + labels_path;
    ds.checksum = detail::fnv1a(lb, detail::fnv1a(ib, 14695981039346656037ULL));
    ds.inputs.reserve(count);
    ds.labels.reserve(count);
    const int border = crop ? 4 : 0;
    const int out_rows = static_cast<int>(rows) - 2 * border;
    const int out_cols = static_cast<int>(cols) - 2 * border;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::size_t base = 16 + static_cast<std::size_t>(t) * pixels;
        Vec x(out_rows * out_cols);
        int k = 0;
        for (int r = border; r < static_cast<int>(rows) - border; ++r)
            for (int c = border; c < static_cast<int>(cols) - border; ++c)
                x(k++) = ib[base + static_cast<std::size_t>(r) * cols +
                            static_cast<std::size_t>(c)] /
                         255.0;
        const std::size_t loff = 8 + t;
        if (lb[loff] > 9)
            throw ParseError(labels_path + ": label " + std::to_string(int(lb[loff])) +
                             " out of range at byte offset " + std::to_string(loff));
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(one_hot(lb[loff]));
    }
    const std::size_t val = detail::validation_count(count);
    for (std::size_t i = 0; i < count - val; ++i) ds.train_indices.push_back(static_cast<int>(i));
    for (std::size_t i = count - val; i < count; ++i) ds.val_indices.push_back(static_cast<int>(i));
    return ds;
}

constexpr std::size_t kCifarRecordBytes = 3073;  // label byte + 3 x 1024 planes
constexpr int kCifarDim = 3072;

/// Loads CIFAR-10 binary batches from `dir`: data_batch_1..5.bin (those
/// present, at least one) as training, test_batch.bin as validation.
inline Dataset load_cifar10(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset ds;
    ds.checksum = 14695981039346656037ULL;
    auto read_batch = [&](const std::string& path, std::vector<int>& idx_out) {
        const std::vector<unsigned char> bytes = detail::read_file(path);
        if (bytes.size() % kCifarRecordBytes != 0)
            throw ParseError(path + ": size " + std::to_string(bytes.size()) +
                             " is not a whole number of records");
        ds.checksum = detail::fnv1a(bytes, ds.checksum);
        const std::size_t records = bytes.size() / kCifarRecordBytes;
        for (std::size_t t = 0; t < records; ++t) {
            const std::size_t base = t * kCifarRecordBytes;
            if (bytes[base] > 9)
                throw ParseError(path + ": label " + std::to_string(int(bytes[base])) +
                                 " out of range at byte offset " + std::to_string(base));
            Vec x(kCifarDim);
            for (int k = 0; k < kCifarDim; ++k)
                x(k) = bytes[base + 1 + static_cast<std::size_t>(k)] / 255.0;
            idx_out.push_back(static_cast<int>(ds.inputs.size()));
            ds.inputs.push_back(std::move(x));
            ds.labels.push_back(one_hot(bytes[base]));
        }
        ds.source += path + ";";
    };

    int found = 0;
    for (int b = 1; b <= 5; ++b) {
        const std::string path = (fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string();
        if (!fs::exists(path)) continue;
        read_batch(path, ds.train_indices);
        ++found;
    }
    if (found == 0) throw IoError("no data_batch_*.bin files under " + dir);
    const std::string test_path = (fs::path(dir) / "test_batch.bin").string();
    if (!fs::exists(test_path)) throw IoError("missing test_batch.bin under " + dir);
    read_batch(test_path, ds.val_indices);
    return ds;
}

/// Class-stratified random subset, deterministic by seed: n_train samples from
/// the training split and n_val from the validation split, class counts as
/// even as the remainder allows. The result is a materialized dataset with
/// fresh 0-based splits.
inline Dataset subset(const Dataset& ds, int n_train, int n_val, std::uint64_t seed) {
    // Classes are interleaved round-robin in the materialized order; online
    // rules forget exponentially, so class-blocked ordering would let the
    // last class dominate the weights.
    auto pick = [&](const std::vector<int>& pool_indices, int want,
                    std::mt19937_64& gen) {
        std::vector<std::vector<int>> by_class(kNumClasses);
        for (int idx : pool_indices) by_class[static_cast<std::size_t>(ds.label_of(
            static_cast<std::size_t>(idx)))].push_back(idx);
        std::vector<std::vector<int>> drawn(kNumClasses);
        int max_quota = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            const int quota = want / kNumClasses + (c < want % kNumClasses ? 1 : 0);
            max_quota = std::max(max_quota, quota);
            auto& pool = by_class[static_cast<std::size_t>(c)];
            if (quota > static_cast<int>(pool.size()))
                throw Error("subset: class " + std::to_string(c) + " has only " +
                            std::to_string(pool.size()) + " samples, need " +
                            std::to_string(quota));
            // Fisher-Yates prefix; explicit draws keep it portable.
            for (int k = 0; k < quota; ++k) {
                const std::size_t j = static_cast<std::size_t>(k) +
                                      uniform_index(gen, pool.size() - static_cast<std::size_t>(k));
                std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
                drawn[static_cast<std::size_t>(c)].push_back(pool[static_cast<std::size_t>(k)]);
            }
        }
        std::vector<int> chosen;
        for (int k = 0; k < max_quota; ++k)
            for (int c = 0; c < kNumClasses; ++c)
                if (k < static_cast<int>(drawn[static_cast<std::size_t>(c)].size()))
                    chosen.push_back(drawn[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)]);
        return chosen;
    };

    if (n_train > static_cast<int>(ds.train_indices.size()) ||
        n_val > static_cast<int>(ds.val_indices.size()))
        throw Error("subset: requested more samples than available");

    std::mt19937_64 gen(seed);
    const std::vector<int> train = pick(ds.train_indices, n_train, gen);
    const std::vector<int> val = pick(ds.val_indices, n_val, gen);

    Dataset out;
    out.source = ds.source + " (subset " + std::to_string(n_train) + "/" +
                 std::to_string(n_val) + " seed " + std::to_string(seed) + ")";
    out.checksum = ds.checksum ^ splitmix64(seed ^ (static_cast<std::uint64_t>(n_train) << 20) ^
                                            static_cast<std::uint64_t>(n_val));
    for (int idx : train) {
        out.train_indices.push_back(static_cast<int>(out.inputs.size()));
        out.inputs.push_back(ds.inputs[static_cast<std::size_t>(idx)]);
        out.labels.push_back(ds.labels[static_cast<std::size_t>(idx)]);
    }
    for (int idx : val) {
        out.val_indices.push_back(static_cast<int>(out.inputs.size()));
        out.inputs.push_back(ds.inputs[static_cast<std::size_t>(idx)]);
        out.labels.push_back(ds.labels[static_cast<std::size_t>(idx)]);
    }
    return out;
}

/// Writes an IDX image file (one byte per pixel, values already in 0..255).
inline void write_idx_images(const std::string& path, const std::vector<std::vector<unsigned char>>& images,
                             int rows, int cols) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    detail::write_be32(out, kIdxImagesMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(images.size()));
    detail::write_be32(out, static_cast<std::uint32_t>(rows));
    detail::write_be32(out, static_cast<std::uint32_t>(cols));
    for (const auto& img : images) {
        if (static_cast<int>(img.size()) != rows * cols)
            throw ShapeError("write_idx_images: image size mismatch");
        out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    }
}

inline void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    detail::write_be32(out, kIdxLabelsMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

/// Writes one CIFAR-10 binary batch: per record a label byte followed by the
/// 3072 pixel bytes (red, green, blue planes).
inline void write_cifar_batch(const std::string& path, const std::vector<unsigned char>& labels,
                              const std::vector<std::vector<unsigned char>>& pixels) {
    if (labels.size() != pixels.size()) throw ShapeError("write_cifar_batch: count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (pixels[t].size() != static_cast<std::size_t>(kCifarDim))
            throw ShapeError("write_cifar_batch: record size mismatch");
        out.put(static_cast<char>(labels[t]));
        out.write(reinterpret_cast<const char*>(pixels[t].data()), kCifarDim);
    }
}

}  // namespace csm
