#pragma once

// Labeled datasets: IDX ingestion and the clustered synthetic generator.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/nn.hpp"

namespace clbench {

struct LabeledDataset {
    Matrix features;
    std::vector<int> labels;
    /// Object class -> category id. Empty means every class is its own category.
    std::vector<int> category_of;
    std::string name;
    /// Row index of every sample in the source dataset it was derived from.
    std::vector<int> rows;

    Eigen::Index size() const { return features.rows(); }

    int num_classes() const {
        int m = -1;
        for (int y : labels)
            m = std::max(m, y);
        return m + 1;
    }

    /// Subset of rows, keeping provenance.
    LabeledDataset select(const std::vector<int>& idx) const {
        LabeledDataset out;
        out.name = name;
        out.category_of = category_of;
        out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        out.labels.reserve(idx.size());
        out.rows.reserve(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
            out.labels.push_back(labels[static_cast<std::size_t>(idx[i])]);
            out.rows.push_back(rows.empty() ? idx[i] : rows[static_cast<std::size_t>(idx[i])]);
        }
        return out;
    }
};

/// A source dataset with its fixed train/test partition.
struct DataSplit {
    LabeledDataset train;
    LabeledDataset test;
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path, std::uint64_t offset) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated header at byte offset " + std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline std::vector<int> identity_rows(std::size_t n) {
    std::vector<int> r(n);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = static_cast<int>(i);
    return r;
}

inline std::string hex_magic(std::uint32_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(8, '0');
    for (int i = 7; i >= 0; --i, v >>= 4)
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

} // namespace detail

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

/// Reads an IDX image/label file pair. Pixels are scaled to [0,1].
inline LabeledDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img)
        throw FormatError(images_path.string() + ": cannot open");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab)
        throw FormatError(labels_path.string() + ": cannot open");
    const std::string ip = images_path.string();
    const std::string lp = labels_path.string();

    const std::uint32_t im = detail::read_be32(img, ip, 0);
    if (im != idx_images_magic)
        throw FormatError(ip + ": bad image magic 0x" + detail::hex_magic(im) + " at byte offset 0");
    const std::uint32_t n_img = detail::read_be32(img, ip, 4);
    const std::uint32_t rows = detail::read_be32(img, ip, 8);
    const std::uint32_t cols = detail::read_be32(img, ip, 12);

    const std::uint32_t lm = detail::read_be32(lab, lp, 0);
    if (lm != idx_labels_magic)
        throw FormatError(lp + ": bad label magic 0x" + detail::hex_magic(lm) + " at byte offset 0");
    const std::uint32_t n_lab = detail::read_be32(lab, lp, 4);
    if (n_img != n_lab)
        throw FormatError(ip + ": image count " + std::to_string(n_img) + " differs from label count " +
                          std::to_string(n_lab) + " in " + lp);
    if (n_img == 0 || rows == 0 || cols == 0)
        throw FormatError(ip + ": empty dataset header at byte offset 4");

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    LabeledDataset out;
    out.name = images_path.filename().string();
    out.features.resize(n_img, static_cast<Eigen::Index>(d));
    out.labels.resize(n_img);
    std::vector<unsigned char> buf(d);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d)))
            throw FormatError(ip + ": truncated pixel data at byte offset " +
                              std::to_string(16 + static_cast<std::uint64_t>(i) * d));
        for (std::size_t k = 0; k < d; ++k)
            out.features(i, static_cast<Eigen::Index>(k)) = buf[k] / 255.0;
        char y;
        if (!lab.get(y))
            throw FormatError(lp + ": truncated label data at byte offset " + std::to_string(8 + i));
        out.labels[i] = static_cast<unsigned char>(y);
    }
    out.rows = detail::identity_rows(n_img);
    return out;
}

/// Standard MNIST file names inside `dir`.
inline DataSplit load_mnist(const std::filesystem::path& dir) {
    DataSplit s;
    s.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    s.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    s.train.name = s.test.name = "mnist";
    return s;
}

/// Hierarchical Gaussian clusters: categories, species (object classes) inside each
/// category, and samples around each species center. All spreads are expected radii
/// (per-coordinate standard deviation spread/sqrt(dim)).
struct SynthSpec {
    int num_categories = 10;
    int species_per_category = 1;
    int dim = 64;
    int train_per_class = 200;
    int test_per_class = 50;
    double category_spread = 1.0;
    double species_spread = 0.5;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;
    std::string name = "synth";

    int num_classes() const { return num_categories * species_per_category; }
};

inline void validate(const SynthSpec& s) {
    if (s.num_categories < 1 || s.species_per_category < 1 || s.dim < 1 || s.train_per_class < 1 ||
        s.test_per_class < 1)
        throw ConfigError("synthetic spec: counts must be positive");
    if (!(s.category_spread > 0) || !(s.species_spread > 0) || !(s.noise_sigma >= 0))
        throw ConfigError("synthetic spec: spreads must be positive");
    if (!(s.species_spread < s.category_spread))
        throw ConfigError("synthetic spec: species_spread must be smaller than category_spread");
}

struct SynthData {
    DataSplit split;
    Matrix category_centers;
    Matrix species_centers; // one row per object class
};

inline SynthData synth_generate_full(const SynthSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    auto draw = [&](double radius) {
        RowVector v(spec.dim);
        for (int k = 0; k < spec.dim; ++k)
            v[k] = radius * scale * gauss(rng);
        return v;
    };

    SynthData out;
    const int C = spec.num_classes();
    out.category_centers.resize(spec.num_categories, spec.dim);
    out.species_centers.resize(C, spec.dim);
    std::vector<int> category_of(static_cast<std::size_t>(C));
    for (int c = 0; c < spec.num_categories; ++c)
        out.category_centers.row(c) = draw(spec.category_spread);
    for (int c = 0; c < spec.num_categories; ++c)
        for (int s = 0; s < spec.species_per_category; ++s) {
            const int cls = c * spec.species_per_category + s;
            out.species_centers.row(cls) = out.category_centers.row(c) + draw(spec.species_spread);
            category_of[static_cast<std::size_t>(cls)] = c;
        }

    auto fill = [&](LabeledDataset& ds, int per_class) {
        ds.name = spec.name;
        ds.category_of = category_of;
        ds.features.resize(static_cast<Eigen::Index>(C) * per_class, spec.dim);
        ds.labels.resize(static_cast<std::size_t>(C) * per_class);
        Eigen::Index r = 0;
        for (int cls = 0; cls < C; ++cls)
            for (int i = 0; i < per_class; ++i, ++r) {
                ds.features.row(r) = out.species_centers.row(cls) + draw(spec.noise_sigma);
                ds.labels[static_cast<std::size_t>(r)] = cls;
            }
        ds.rows = detail::identity_rows(ds.labels.size());
    };
    fill(out.split.train, spec.train_per_class);
    fill(out.split.test, spec.test_per_class);
    return out;
}

inline DataSplit synth_generate(const SynthSpec& spec) { return synth_generate_full(spec).split; }

} // namespace clbench
