#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "larp/core.hpp"

namespace larp {

class EmptyDatasetError : public InputError {
public:
    using InputError::InputError;
};

struct LabeledDataset {
    std::vector<FeatureMap> images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;  // may be empty

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
    /// max(label) + 1, or class_names.size() when that is larger.
    std::size_t num_classes() const noexcept;

    /// Throws InputError if images/labels disagree in count, images disagree in
    /// shape, or a label is out of range for `num_classes` (when nonzero).
    void validate(std::size_t num_classes = 0) const;

    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Big-endian IDX3 unsigned-byte images; pixels are scaled by 1/255.
std::vector<FeatureMap> load_idx_images(const std::filesystem::path& path);
/// Big-endian IDX1 unsigned-byte labels.
std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path);

/// Writes IDX3 images, quantizing each value v in [0, 1] to round(255·v).
void write_idx_images(const std::filesystem::path& path, std::span<const FeatureMap> images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::size_t> labels);

LabeledDataset load_idx_dataset(const std::filesystem::path& images,
                                const std::filesystem::path& labels);

/// Binary PGM (P5), 8- or 16-bit, scaled by 1/maxval.
FeatureMap load_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const FeatureMap& image);

/// One subdirectory per class under `root`; classes indexed in sorted name order.
LabeledDataset load_image_dir(const std::filesystem::path& root,
                              const std::string& extension = ".pgm");

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified seeded split: each class sends floor(fraction·n_c) of its
/// shuffled members to test and the rest to train.
Split split_indices(std::span<const std::size_t> labels, double fraction, std::uint64_t seed);

std::pair<LabeledDataset, LabeledDataset> deterministic_split(const LabeledDataset& dataset,
                                                              double fraction,
                                                              std::uint64_t seed);

/// Stratified seeded subset of exactly `count` samples. Per-class quotas are
/// proportional to class size, leftovers assigned by largest remainder.
std::vector<std::size_t> stratified_subsample_indices(std::span<const std::size_t> labels,
                                                      std::size_t count, std::uint64_t seed);

LabeledDataset stratified_subsample(const LabeledDataset& dataset, std::size_t count,
                                    std::uint64_t seed);

}  // namespace larp
