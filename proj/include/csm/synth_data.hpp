#pragma once

// Deterministic synthetic datasets written in the real on-disk formats (IDX
// and CIFAR-10 binary), for fixtures and offline runs. Digits are rendered
// glyphs with random placement, scale, intensity, and noise; ten classes,
// balanced.

#include "csm/data_io.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace csm {

namespace detail {

inline const std::array<std::array<const char*, 7>, 10>& digit_glyphs() {
    static const std::array<std::array<const char*, 7>, 10> glyphs = {{
        {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."},
        {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
        {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
        {".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."},
        {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
        {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
        {".###.", "#....", "####.", "#...#", "#...#", "#...#", ".###."},
        {"#####", "....#", "...#.", "...#.", "..#..", "..#..", "..#.."},
        {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
        {".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."},
    }};
    return glyphs;
}

inline std::vector<unsigned char> render_digit(int digit, std::mt19937_64& gen) {
    const auto& glyph = digit_glyphs()[static_cast<std::size_t>(digit)];
    const int side = 28;
    const double sx = uniform_in(gen, 2.6, 3.4);
    const double sy = uniform_in(gen, 2.8, 3.6);
    const double ox = uniform_in(gen, 1.0, side - 5.0 * sx - 1.0);
    const double oy = uniform_in(gen, 1.0, side - 7.0 * sy - 1.0);
    const double base = uniform_in(gen, 0.7, 1.0);

    std::vector<unsigned char> img(side * side, 0);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            // 2x2 supersampling gives gray stroke edges.
            int hits = 0;
            for (int s = 0; s < 4; ++s) {
                const double rr = r + 0.25 + 0.5 * (s / 2);
                const double cc = c + 0.25 + 0.5 * (s % 2);
                const int gr = static_cast<int>(std::floor((rr - oy) / sy));
                const int gc = static_cast<int>(std::floor((cc - ox) / sx));
                if (gr >= 0 && gr < 7 && gc >= 0 && gc < 5 && glyph[static_cast<std::size_t>(gr)][gc] == '#')
                    ++hits;
            }
            double v = base * (hits / 4.0);
            v += 0.07 * normal_unit(gen);
            if (uniform_unit(gen) < 0.01) v = std::max(v, uniform_in(gen, 0.2, 0.9));
            v = std::min(1.0, std::max(0.0, v));
            img[static_cast<std::size_t>(r * side + c)] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
    }
    return img;
}

}  // namespace detail

/// Writes train/t10k IDX files of rendered digits under `dir` (created if
/// needed). Classes cycle 0..9, so every prefix is nearly balanced.
inline void write_synthetic_mnist(const std::string& dir, int train_count = 60000,
                                  int test_count = 10000, std::uint64_t seed = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::mt19937_64 gen(seed);
    auto make_split = [&](int count, const std::string& stem) {
        std::vector<std::vector<unsigned char>> images;
        std::vector<unsigned char> labels;
        images.reserve(static_cast<std::size_t>(count));
        labels.reserve(static_cast<std::size_t>(count));
        for (int t = 0; t < count; ++t) {
            const int digit = t % 10;
            images.push_back(detail::render_digit(digit, gen));
            labels.push_back(static_cast<unsigned char>(digit));
        }
        write_idx_images((fs::path(dir) / (stem + "-images-idx3-ubyte")).string(), images, 28, 28);
        write_idx_labels((fs::path(dir) / (stem + "-labels-idx1-ubyte")).string(), labels);
    };
    make_split(train_count, "train");
    make_split(test_count, "t10k");
}

/// Writes CIFAR-10-format batches of colored class blobs under `dir`:
/// data_batch_1..5.bin with `per_batch` records each plus test_batch.bin.
inline void write_synthetic_cifar10(const std::string& dir, int per_batch = 400,
                                    int test_count = 400, std::uint64_t seed = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::mt19937_64 gen(seed);
    const int side = 32;
    auto render = [&](int cls) {
        std::vector<unsigned char> px(static_cast<std::size_t>(kCifarDim), 0);
        const double cx = uniform_in(gen, 8.0, 24.0);
        const double cy = uniform_in(gen, 8.0, 24.0);
        const double rad = 4.0 + cls * 0.5 + uniform_in(gen, 0.0, 2.0);
        const double rgb[3] = {((cls * 37 + 40) % 256) / 255.0, ((cls * 91 + 80) % 256) / 255.0,
                               ((cls * 151 + 120) % 256) / 255.0};
        for (int ch = 0; ch < 3; ++ch) {
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    double v = 0.15 + 0.1 * (y / 31.0);  // background gradient
                    if (d2 <= rad * rad) v = rgb[ch];
                    v += 0.05 * normal_unit(gen);
                    v = std::min(1.0, std::max(0.0, v));
                    px[static_cast<std::size_t>(ch * side * side + y * side + x)] =
                        static_cast<unsigned char>(std::lround(v * 255.0));
                }
            }
        }
        return px;
    };
    auto make_batch = [&](const std::string& name, int count) {
        std::vector<unsigned char> labels;
        std::vector<std::vector<unsigned char>> pixels;
        for (int t = 0; t < count; ++t) {
            const int cls = t % 10;
            labels.push_back(static_cast<unsigned char>(cls));
            pixels.push_back(render(cls));
        }
        write_cifar_batch((fs::path(dir) / name).string(), labels, pixels);
    };
    for (int b = 1; b <= 5; ++b) make_batch("data_batch_" + std::to_string(b) + ".bin", per_batch);
    make_batch("test_batch.bin", test_count);
}

}  // namespace csm
