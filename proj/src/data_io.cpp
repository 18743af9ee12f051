#include "larp/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace larp {
namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

std::ofstream open_for_write(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path.string());
    return out;
}

void shuffle(std::vector<std::size_t>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.uniform_index(i)]);
    }
}

// Members of each class in ascending index order.
std::vector<std::vector<std::size_t>> group_by_class(std::span<const std::size_t> labels) {
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= groups.size()) groups.resize(labels[i] + 1);
        groups[labels[i]].push_back(i);
    }
    return groups;
}

// Skips whitespace and '#' comments in a PNM header.
std::size_t skip_header_space(const std::vector<unsigned char>& bytes, std::size_t pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    return pos;
}

std::size_t read_header_int(const std::vector<unsigned char>& bytes, std::size_t& pos,
                            const fs::path& path) {
    pos = skip_header_space(bytes, pos);
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        if (value > (1u << 30)) throw FormatError(path.string() + ": PGM header value too large");
        ++pos;
    }
    return value;
}

}  // namespace

std::size_t LabeledDataset::num_classes() const noexcept {
    std::size_t classes = class_names.size();
    for (std::size_t label : labels) classes = std::max(classes, label + 1);
    return classes;
}

void LabeledDataset::validate(std::size_t classes) const {
    if (images.size() != labels.size()) {
        throw InputError("dataset: " + std::to_string(images.size()) + " images but " +
                         std::to_string(labels.size()) + " labels");
    }
    for (const auto& image : images) {
        if (!image.same_shape(images.front())) throw InputError("dataset: mixed image sizes");
    }
    if (classes != 0) {
        for (std::size_t label : labels) {
            if (label >= classes) {
                throw InputError("dataset: label " + std::to_string(label) + " out of range for " +
                                 std::to_string(classes) + " classes");
            }
        }
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.class_names = class_names;
    out.images.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        out.images.push_back(images.at(i));
        out.labels.push_back(labels.at(i));
    }
    return out;
}

std::vector<FeatureMap> load_idx_images(const fs::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 16) throw FormatError(path.string() + ": truncated IDX header");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kIdxImageMagic) {
        throw FormatError(path.string() + ": bad IDX image magic " + std::to_string(magic));
    }
    const std::size_t count = read_be32(bytes, 4);
    const std::size_t rows = read_be32(bytes, 8);
    const std::size_t cols = read_be32(bytes, 12);
    const std::size_t pixels = rows * cols;
    if (bytes.size() - 16 < count * pixels) {
        throw FormatError(path.string() + ": truncated IDX image data");
    }
    if (bytes.size() - 16 > count * pixels) {
        throw FormatError(path.string() + ": trailing bytes after IDX image data");
    }
    std::vector<FeatureMap> images;
    images.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        std::vector<double> values(pixels);
        const unsigned char* src = bytes.data() + 16 + n * pixels;
        for (std::size_t p = 0; p < pixels; ++p) values[p] = src[p] / 255.0;
        images.emplace_back(rows, cols, std::move(values));
    }
    return images;
}

std::vector<std::size_t> load_idx_labels(const fs::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 8) throw FormatError(path.string() + ": truncated IDX header");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kIdxLabelMagic) {
        throw FormatError(path.string() + ": bad IDX label magic " + std::to_string(magic));
    }
    const std::size_t count = read_be32(bytes, 4);
    if (bytes.size() - 8 < count) throw FormatError(path.string() + ": truncated IDX label data");
    if (bytes.size() - 8 > count) {
        throw FormatError(path.string() + ": trailing bytes after IDX label data");
    }
    return {bytes.begin() + 8, bytes.end()};
}

void write_idx_images(const fs::path& path, std::span<const FeatureMap> images) {
    const std::size_t rows = images.empty() ? 0 : images.front().height();
    const std::size_t cols = images.empty() ? 0 : images.front().width();
    auto out = open_for_write(path);
    put_be32(out, kIdxImageMagic);
    put_be32(out, static_cast<std::uint32_t>(images.size()));
    put_be32(out, static_cast<std::uint32_t>(rows));
    put_be32(out, static_cast<std::uint32_t>(cols));
    std::vector<char> buffer(rows * cols);
    for (const auto& image : images) {
        if (image.height() != rows || image.width() != cols) {
            throw ShapeError("IDX writer: images differ in size");
        }
        auto values = image.values();
        for (std::size_t p = 0; p < values.size(); ++p) {
            const double v = std::clamp(values[p], 0.0, 1.0);
            buffer[p] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
        }
        out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    }
    if (!out) throw InputError("failed writing " + path.string());
}

void write_idx_labels(const fs::path& path, std::span<const std::size_t> labels) {
    auto out = open_for_write(path);
    put_be32(out, kIdxLabelMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (std::size_t label : labels) {
        if (label > 255) throw InputError("IDX writer: label does not fit in a byte");
        out.put(static_cast<char>(label));
    }
    if (!out) throw InputError("failed writing " + path.string());
}

LabeledDataset load_idx_dataset(const fs::path& images, const fs::path& labels) {
    LabeledDataset dataset;
    dataset.images = load_idx_images(images);
    dataset.labels = load_idx_labels(labels);
    if (dataset.images.size() != dataset.labels.size()) {
        throw FormatError(images.string() + " holds " + std::to_string(dataset.images.size()) +
                          " images but " + labels.string() + " holds " +
                          std::to_string(dataset.labels.size()) + " labels");
    }
    return dataset;
}

FeatureMap load_pgm(const fs::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw FormatError(path.string() + ": not a binary PGM (P5) file");
    }
    std::size_t pos = 2;
    const std::size_t width = read_header_int(bytes, pos, path);
    const std::size_t height = read_header_int(bytes, pos, path);
    const std::size_t maxval = read_header_int(bytes, pos, path);
    if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
        throw FormatError(path.string() + ": invalid PGM dimensions or maxval");
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    ++pos;  // exactly one whitespace byte before the raster
    const std::size_t depth = maxval < 256 ? 1 : 2;
    const std::size_t pixels = width * height;
    if (bytes.size() - pos < pixels * depth) throw FormatError(path.string() + ": truncated PGM");
    std::vector<double> values(pixels);
    const double scale = 1.0 / static_cast<double>(maxval);
    for (std::size_t p = 0; p < pixels; ++p) {
        std::size_t raw = bytes[pos + p * depth];
        if (depth == 2) raw = (raw << 8) | bytes[pos + p * depth + 1];
        if (raw > maxval) throw FormatError(path.string() + ": pixel exceeds maxval");
        values[p] = static_cast<double>(raw) * scale;
    }
    return FeatureMap(height, width, std::move(values));
}

void write_pgm(const fs::path& path, const FeatureMap& image) {
    auto out = open_for_write(path);
    out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
    for (double v : image.values()) {
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    if (!out) throw InputError("failed writing " + path.string());
}

LabeledDataset load_image_dir(const fs::path& root, const std::string& extension) {
    if (!fs::is_directory(root)) throw InputError("not a directory: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    LabeledDataset dataset;
    for (const auto& dir : class_dirs) {
        const std::size_t label = dataset.class_names.size();
        dataset.class_names.push_back(dir.filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == extension) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            FeatureMap image = load_pgm(file);
            if (!dataset.images.empty() && !image.same_shape(dataset.images.front())) {
                throw FormatError(file.string() + ": image size differs from the rest of the dataset");
            }
            dataset.images.push_back(std::move(image));
            dataset.labels.push_back(label);
        }
    }
    if (dataset.empty()) throw EmptyDatasetError("no images found under " + root.string());
    return dataset;
}

Split split_indices(std::span<const std::size_t> labels, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw InputError("split fraction must lie strictly between 0 and 1");
    }
    auto groups = group_by_class(labels);
    Rng rng(mix64(seed));
    Split split;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        auto& members = groups[c];
        if (members.empty()) continue;
        if (members.size() < 2) {
            throw InputError("split: class " + std::to_string(c) + " has fewer than 2 samples");
        }
        shuffle(members, rng);
        const auto n_test = static_cast<std::size_t>(
            std::floor(fraction * static_cast<double>(members.size()) + 1e-9));
        split.test.insert(split.test.end(), members.begin(),
                          members.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.insert(split.train.end(),
                           members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::pair<LabeledDataset, LabeledDataset> deterministic_split(const LabeledDataset& dataset,
                                                              double fraction,
                                                              std::uint64_t seed) {
    dataset.validate();
    const Split split = split_indices(dataset.labels, fraction, seed);
    return {dataset.subset(split.train), dataset.subset(split.test)};
}

std::vector<std::size_t> stratified_subsample_indices(std::span<const std::size_t> labels,
                                                      std::size_t count, std::uint64_t seed) {
    const std::size_t total = labels.size();
    if (count > total) {
        throw InputError("subsample of " + std::to_string(count) + " requested from " +
                         std::to_string(total) + " samples");
    }
    if (count == total) {
        std::vector<std::size_t> all(total);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    auto groups = group_by_class(labels);
    std::vector<std::size_t> quota(groups.size());
    std::vector<std::size_t> remainder(groups.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        quota[c] = count * groups[c].size() / total;
        remainder[c] = count * groups[c].size() % total;
        assigned += quota[c];
    }
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < count; ++k) {
        const std::size_t c = order[k % order.size()];
        if (quota[c] < groups[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    Rng rng(mix64(seed ^ 0x5ab5a3b1e5ULL));
    std::vector<std::size_t> picked;
    picked.reserve(count);
    for (std::size_t c = 0; c < groups.size(); ++c) {
        shuffle(groups[c], rng);
        picked.insert(picked.end(), groups[c].begin(),
                      groups[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

LabeledDataset stratified_subsample(const LabeledDataset& dataset, std::size_t count,
                                    std::uint64_t seed) {
    dataset.validate();
    const auto indices = stratified_subsample_indices(dataset.labels, count, seed);
    return dataset.subset(indices);
}

}  // namespace larp
