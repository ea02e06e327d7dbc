#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sign/rng.hpp"
#include "sign/score.hpp"

namespace sign {

enum class DatasetKind { gaussian_mixture, two_moons, checkerboard2d, rings, toy_images, idx_images };

const char* to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

inline constexpr const char* kDefaultMixture = "0.5:1,1:0.1;0.5:-1,-1:0.1";

struct DatasetSpec {
    DatasetKind kind = DatasetKind::gaussian_mixture;
    std::size_t count = 20000;
    bool normalize = true;
    std::string mixture = kDefaultMixture;  // gaussian_mixture: "w:m0,m1:s;..."
    double jitter = 0.05;                   // two_moons / rings / checkerboard2d noise
    std::size_t image_size = 8;             // toy_images side length
    std::size_t templates = 8;              // toy_images pattern count
    double pixel_noise = 0.05;              // toy_images per-pixel std
    std::string images_path;                // idx_images
    std::string labels_path;                // idx_images, optional
};

struct Dataset {
    Tensor samples;  // [M, d]
    // Ground truth for mixture-backed kinds, in the same (normalized) coordinates as samples.
    std::optional<GaussianMixture> mixture;
    // Raw = samples * scale + shift (per dimension).
    std::vector<double> shift;
    std::vector<double> scale;
    std::size_t height = 0;  // image kinds only
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    std::size_t dim() const { return samples.cols(); }
    bool is_image() const { return height * width > 0; }
};

// Draws a dataset. 2D kinds are normalized to zero mean and unit variance per
// dimension when spec.normalize is set; image kinds stay in [-1, 1] pixel units.
Dataset generate(const DatasetSpec& spec, Rng& rng);

// Per-dimension sample mean and standard deviation.
std::vector<double> column_mean(const Tensor& x);
std::vector<double> column_std(const Tensor& x);

struct IdxImages {
    Tensor images;  // [M, rows*cols], pixels mapped to 2 p / 255 - 1
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> labels;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

IdxImages parse_idx(std::span<const std::uint8_t> image_bytes,
                    std::optional<std::span<const std::uint8_t>> label_bytes = std::nullopt);
IdxImages load_idx(const std::string& images_path, const std::string& labels_path = "");

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// CSV with header "x0,...,x{d-1}", values at 17 significant digits.
std::string samples_to_csv(const Tensor& x, bool with_id = false);
void save_samples(const std::string& path, const Tensor& x, bool with_id = false);
// Reads the x<k> columns of a CSV; other columns are ignored. Malformed rows
// raise FormatError carrying the line number.
Tensor parse_samples(const std::string& text);
Tensor load_samples(const std::string& path);

// Binary P5 image; values clamp to [-1, 1] before 8-bit quantization. Several
// images are tiled into a grid `grid_cols` wide.
std::vector<std::uint8_t> to_pgm(const Tensor& images, std::size_t height, std::size_t width,
                                 std::size_t grid_cols = 0);
void save_pgm(const std::string& path, const Tensor& images, std::size_t height, std::size_t width,
              std::size_t grid_cols = 0);

// Stream of uniformly resampled rows of a fixed dataset.
Tensor sample_rows(const Tensor& data, std::size_t count, Rng& rng);

}  // namespace sign
