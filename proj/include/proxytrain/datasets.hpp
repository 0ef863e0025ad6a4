#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "proxytrain/tensor.hpp"

namespace proxytrain {

enum class Split { train, dev, test };

std::string split_name(Split s);

/// Flat labeled dataset. For retrieval datasets the train and test class sets
/// are disjoint (zero-shot protocol); dev rows hold out examples from train
/// classes. The manifest records the generator and its arguments.
struct Dataset {
    Tensor inputs;  // [N x D]
    std::vector<int> labels;
    std::vector<Split> split;
    int n_classes = 0;
    std::string manifest;

    std::vector<std::size_t> indices_of(Split s) const;
    Tensor rows(const std::vector<std::size_t>& idx) const;
    std::vector<int> labels_of(const std::vector<std::size_t>& idx) const;

    /// Persists inputs in the tensor text format plus a label file
    /// (label + split per line) and the manifest.
    void save(const std::filesystem::path& dir) const;
    static Dataset load(const std::filesystem::path& dir);
};

/// Two interleaving half circles with Gaussian noise, n/2 points per class,
/// all rows tagged train. noise=0 puts every point exactly on its arc.
Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed);

/// Isotropic Gaussian blobs around unit-norm random means. The first half of
/// the classes form the train split (with the last fifth of each class's
/// examples tagged dev), the second half the zero-shot test split.
Dataset make_gaussian_classes(std::size_t n_classes, std::size_t per_class, std::size_t dim,
                              double spread, std::uint64_t seed);

/// Toy semi-supervised segmentation task: images are low-frequency random
/// fields on a grid x grid lattice, per-pixel labels are the thresholded
/// clean field (2 classes). Per-pixel features: the noisy field value plus
/// `noise_channels` pure-noise channels.
struct GridSegDataset {
    std::size_t grid = 0;            // G
    std::size_t feature_dim = 0;     // channels per pixel
    Tensor pixels;                   // [n_images x G^2 x F]
    std::vector<std::vector<int>> pixel_labels;  // per image, G^2 entries in {0,1}
    std::vector<Split> split;        // per image
    std::vector<bool> labeled;       // per image; meaningful for train images
    std::string manifest;

    std::vector<std::size_t> images_of(Split s) const;
    std::vector<std::size_t> labeled_train_images() const;
    std::vector<std::size_t> unlabeled_train_images() const;
    /// Pixel rows of one image as [G^2 x F].
    Tensor image_pixels(std::size_t image) const;
};

/// Generates n_images training-pool images plus a fixed 50-image dev split
/// and a 50-image test split. floor(n_images * labeled_fraction) pool images
/// are labeled, the rest form the unlabeled pool.
GridSegDataset make_toy_grid_segmentation(std::size_t grid, std::size_t n_images,
                                          double labeled_fraction, std::uint64_t seed);

}  // namespace proxytrain
