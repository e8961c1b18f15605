#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace mim::data {

// Labeled ID data or unlabeled OOD test data. Pixels live in [0, 1].
struct Dataset {
    Tensor images;  // [N x C x H x W]
    std::optional<std::vector<int>> labels;
    std::string name;

    std::size_t size() const { return images.shape()[0]; }
    Shape sample_shape() const {  // [C, H, W]
        return {images.shape()[1], images.shape()[2], images.shape()[3]};
    }
};

// Throws DataError unless images are rank 4, pixels in [0, 1] and labels
// (when present) match N and lie in [0, num_classes).
void validate_dataset(const Dataset& ds, std::size_t num_classes = 0);

struct BatchPlan {
    std::size_t batch_size = 32;
    std::uint64_t shuffle_seed = 0;
    bool drop_last = false;
};

struct Batch {
    Tensor x;  // [b x C x H x W]
    std::optional<std::vector<int>> y;
    std::vector<std::size_t> indices;  // source rows in the dataset
};

// Seeded Fisher-Yates shuffle, then consecutive chunks of batch_size.
std::vector<Batch> batches(const Dataset& ds, const BatchPlan& plan);

// CIFAR-10 binary layout: 3073-byte records, label byte then R/G/B planes.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir_path);
// Decodes one concatenation of 3073-byte records (testing hook for the
// same code path load_cifar10 uses per file).
Dataset decode_cifar_records(const std::vector<std::uint8_t>& bytes, const std::string& name);

// "MIMD" portable raw dataset format (f64 pixels, optional u32 labels).
void save_raw_dataset(const Dataset& ds, const std::string& path);
Dataset load_raw_dataset(const std::string& path);

struct SynthConfig {
    std::size_t num_classes = 4;
    std::size_t n_per_class = 100;
    double class_mean_radius = 2.0;
    double sigma = 0.5;
    enum class OodKind { Ring, Shifted } ood_kind = OodKind::Ring;
    std::size_t n_ood = 0;  // 0 -> num_classes * n_per_class / 5
    std::uint64_t seed = 0;
};

struct SynthBenchmark {
    Dataset id_train;
    Dataset id_test;
    Dataset ood_test;
};

// Circle-of-Gaussians ID classes encoded as 1x1x2 "images"; OOD on the
// ring of radius 2r (or a shifted Gaussian). The affine map into [0,1]
// is recorded in each dataset name.
SynthBenchmark synth_gaussian_benchmark(const SynthConfig& cfg);

}  // namespace mim::data
