#include "proxytrain/datasets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "proxytrain/errors.hpp"
#include "proxytrain/rng.hpp"

namespace proxytrain {

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "?";
}

namespace {

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    throw IoError("unknown split tag '" + s + "'");
}

}  // namespace

std::vector<std::size_t> Dataset::indices_of(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) idx.push_back(i);
    }
    return idx;
}

Tensor Dataset::rows(const std::vector<std::size_t>& idx) const {
    const std::size_t d = inputs.dim(1);
    std::vector<double> out;
    out.reserve(idx.size() * d);
    for (std::size_t i : idx) {
        out.insert(out.end(), inputs.data().begin() + i * d, inputs.data().begin() + (i + 1) * d);
    }
    return Tensor({idx.size(), d}, std::move(out));
}

std::vector<int> Dataset::labels_of(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels[i]);
    return out;
}

void Dataset::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "inputs.tensor");
        if (!os) throw IoError("dataset save: cannot open " + (dir / "inputs.tensor").string());
        inputs.write_text(os);
    }
    {
        std::ofstream os(dir / "labels.txt");
        os << "n_classes: " << n_classes << "\n";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            os << labels[i] << ' ' << split_name(split[i]) << "\n";
        }
    }
    {
        std::ofstream os(dir / "manifest.txt");
        os << manifest;
        if (!manifest.empty() && manifest.back() != '\n') os << '\n';
    }
}

Dataset Dataset::load(const std::filesystem::path& dir) {
    Dataset ds;
    {
        std::ifstream is(dir / "inputs.tensor");
        if (!is) throw IoError("dataset load: cannot open " + (dir / "inputs.tensor").string());
        ds.inputs = Tensor::read_text(is);
    }
    {
        std::ifstream is(dir / "labels.txt");
        if (!is) throw IoError("dataset load: cannot open " + (dir / "labels.txt").string());
        std::string tok;
        if (!(is >> tok) || tok != "n_classes:" || !(is >> ds.n_classes)) {
            throw IoError("dataset load: malformed labels header");
        }
        int label;
        std::string split;
        while (is >> label >> split) {
            ds.labels.push_back(label);
            ds.split.push_back(parse_split(split));
        }
    }
    if (ds.labels.size() != ds.inputs.dim(0)) {
        throw IoError("dataset load: " + std::to_string(ds.labels.size()) + " labels for " +
                      std::to_string(ds.inputs.dim(0)) + " rows");
    }
    {
        std::ifstream is(dir / "manifest.txt");
        std::ostringstream ss;
        ss << is.rdbuf();
        ds.manifest = ss.str();
    }
    return ds;
}

Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2 || n % 2 != 0) throw ValueError("make_two_moons: n must be even and >= 2");
    if (noise < 0.0) throw ValueError("make_two_moons: noise must be >= 0");
    const std::size_t half = n / 2;
    Rng rng = Rng::stream(seed, "two_moons");

    const double pi = 3.14159265358979323846;
    std::vector<double> d;
    d.reserve(n * 2);
    std::vector<int> labels;
    labels.reserve(n);
    // outer arc: (cos t, sin t); inner arc: (1 - cos t, 1/2 - sin t)
    for (std::size_t i = 0; i < half; ++i) {
        const double t = pi * static_cast<double>(i) / static_cast<double>(half - 1);
        d.push_back(std::cos(t));
        d.push_back(std::sin(t));
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < half; ++i) {
        const double t = pi * static_cast<double>(i) / static_cast<double>(half - 1);
        d.push_back(1.0 - std::cos(t));
        d.push_back(0.5 - std::sin(t));
        labels.push_back(1);
    }
    if (noise > 0.0) {
        for (double& v : d) v += rng.normal(0.0, noise);
    }

    Dataset ds;
    ds.inputs = Tensor({n, 2}, std::move(d));
    ds.labels = std::move(labels);
    ds.split.assign(n, Split::train);
    ds.n_classes = 2;
    std::ostringstream m;
    m << "generator=two_moons n=" << n << " noise=" << noise << " seed=" << seed;
    ds.manifest = m.str();
    return ds;
}

Dataset make_gaussian_classes(std::size_t n_classes, std::size_t per_class, std::size_t dim,
                              double spread, std::uint64_t seed) {
    if (n_classes < 4) throw ValueError("make_gaussian_classes: need n_classes >= 4");
    if (per_class < 1 || dim < 1) throw ValueError("make_gaussian_classes: bad sizes");
    if (spread < 0.0) throw ValueError("make_gaussian_classes: spread must be >= 0");
    Rng rng = Rng::stream(seed, "gaussian_classes");

    // unit-norm random means
    std::vector<std::vector<double>> means(n_classes, std::vector<double>(dim));
    for (auto& m : means) {
        double s = 0.0;
        for (double& v : m) {
            v = rng.normal();
            s += v * v;
        }
        const double inv = 1.0 / std::sqrt(s);
        for (double& v : m) v *= inv;
    }

    const std::size_t n = n_classes * per_class;
    const std::size_t train_classes = n_classes / 2;
    const std::size_t dev_per_class = per_class / 5;  // last fifth of each train class

    std::vector<double> d;
    d.reserve(n * dim);
    Dataset ds;
    ds.labels.reserve(n);
    ds.split.reserve(n);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t j = 0; j < dim; ++j) d.push_back(means[c][j] + spread * rng.normal());
            ds.labels.push_back(static_cast<int>(c));
            if (c >= train_classes) {
                ds.split.push_back(Split::test);
            } else {
                ds.split.push_back(i >= per_class - dev_per_class ? Split::dev : Split::train);
            }
        }
    }
    ds.inputs = Tensor({n, dim}, std::move(d));
    ds.n_classes = static_cast<int>(n_classes);
    std::ostringstream m;
    m << "generator=gaussian_classes n_classes=" << n_classes << " per_class=" << per_class
      << " dim=" << dim << " spread=" << spread << " seed=" << seed;
    ds.manifest = m.str();
    return ds;
}

std::vector<std::size_t> GridSegDataset::images_of(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) idx.push_back(i);
    }
    return idx;
}

std::vector<std::size_t> GridSegDataset::labeled_train_images() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == Split::train && labeled[i]) idx.push_back(i);
    }
    return idx;
}

std::vector<std::size_t> GridSegDataset::unlabeled_train_images() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == Split::train && !labeled[i]) idx.push_back(i);
    }
    return idx;
}

Tensor GridSegDataset::image_pixels(std::size_t image) const {
    const std::size_t px = grid * grid, f = feature_dim;
    std::vector<double> out(pixels.data().begin() + image * px * f,
                            pixels.data().begin() + (image + 1) * px * f);
    return Tensor({px, f}, std::move(out));
}

GridSegDataset make_toy_grid_segmentation(std::size_t grid, std::size_t n_images,
                                          double labeled_fraction, std::uint64_t seed) {
    if (grid < 4) throw ValueError("make_toy_grid_segmentation: grid must be >= 4");
    if (n_images < 1) throw ValueError("make_toy_grid_segmentation: need n_images >= 1");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
        throw ValueError("make_toy_grid_segmentation: labeled_fraction in (0,1]");
    }
    Rng rng = Rng::stream(seed, "toy_grid");

    constexpr std::size_t kDevImages = 50;
    constexpr std::size_t kTestImages = 50;
    constexpr std::size_t kNoiseChannels = 2;
    constexpr double kObsNoise = 0.5;
    constexpr double kWiggle = 3.5;      // boundary frequency in the latent field
    constexpr double kThreshold = 0.45;   // classes imbalanced on purpose
    const std::size_t total = n_images + kDevImages + kTestImages;
    const std::size_t px = grid * grid;
    const std::size_t f = 2 + kNoiseChannels;

    GridSegDataset ds;
    ds.grid = grid;
    ds.feature_dim = f;
    ds.pixel_labels.resize(total);
    ds.split.reserve(total);
    ds.labeled.assign(total, false);

    std::vector<double> data;
    data.reserve(total * px * f);

    // Two independent low-frequency random fields per image (sums of a few
    // long-wavelength sinusoids). The label is a thresholded composite field
    // that is wiggly in the first latent, so the decision boundary in feature
    // space takes many pixels to pin down.
    constexpr int kWaves = 4;
    const double two_pi = 6.28318530717958647692;
    for (std::size_t img = 0; img < total; ++img) {
        double fr[2][kWaves], fc[2][kWaves], ph[2][kWaves], amp[2][kWaves];
        for (int l = 0; l < 2; ++l) {
            for (int w = 0; w < kWaves; ++w) {
                fr[l][w] = 1.0 + rng.uniform_index(2);  // spatial frequency 1 or 2
                fc[l][w] = 1.0 + rng.uniform_index(2);
                ph[l][w] = rng.uniform(0.0, two_pi);
                amp[l][w] = rng.uniform(0.5, 1.0);
            }
        }
        ds.pixel_labels[img].resize(px);
        for (std::size_t r = 0; r < grid; ++r) {
            for (std::size_t c = 0; c < grid; ++c) {
                double latent[2];
                for (int l = 0; l < 2; ++l) {
                    latent[l] = 0.0;
                    for (int w = 0; w < kWaves; ++w) {
                        latent[l] += amp[l][w] *
                                     std::sin(two_pi * (fr[l][w] * static_cast<double>(r) +
                                                        fc[l][w] * static_cast<double>(c)) /
                                                  static_cast<double>(grid) +
                                              ph[l][w]);
                    }
                }
                const double composite = std::sin(kWiggle * latent[0]) + latent[1];
                ds.pixel_labels[img][r * grid + c] = composite > kThreshold ? 1 : 0;
                data.push_back(latent[0] + kObsNoise * rng.normal());
                data.push_back(latent[1] + kObsNoise * rng.normal());
                for (std::size_t nc = 0; nc < kNoiseChannels; ++nc) data.push_back(rng.normal());
            }
        }
        if (img < n_images) {
            ds.split.push_back(Split::train);
        } else if (img < n_images + kDevImages) {
            ds.split.push_back(Split::dev);
        } else {
            ds.split.push_back(Split::test);
        }
    }
    ds.pixels = Tensor({total, px, f}, std::move(data));

    // labeled subset of the train pool, chosen without replacement
    const std::size_t n_labeled =
        static_cast<std::size_t>(static_cast<double>(n_images) * labeled_fraction);
    std::vector<std::size_t> pool(n_images);
    for (std::size_t i = 0; i < n_images; ++i) pool[i] = i;
    rng.shuffle(pool);
    for (std::size_t i = 0; i < n_labeled && i < pool.size(); ++i) ds.labeled[pool[i]] = true;

    std::ostringstream m;
    m << "generator=toy_grid_segmentation grid=" << grid << " n_images=" << n_images
      << " labeled_fraction=" << labeled_fraction << " seed=" << seed;
    ds.manifest = m.str();
    return ds;
}

}  // namespace proxytrain
