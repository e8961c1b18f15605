#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace mim::synth {

struct MixupConfig {
    std::size_t k = 5;
    enum class WeightMode { Equal, Dirichlet } weight_mode = WeightMode::Equal;
    double alpha = 1.0;  // Dirichlet concentration
};

using Interval = std::pair<double, double>;

struct AugmentConfig {
    std::size_t target_h = 32;
    std::size_t target_w = 32;
    Interval brightness{0.5, 1.5};
    Interval contrast{0.5, 1.5};
    Interval saturation{0.5, 1.5};
    Interval hue{-0.1, 0.1};            // turns
    Interval rotation_degrees{-90, 90};
    Interval translate_frac{0.0, 0.2};  // fraction of W and H

    void validate() const;
    // Configuration under which the whole pipeline is the identity map.
    static AugmentConfig identity(std::size_t h, std::size_t w);
};

struct MixedBatch {
    Tensor x_mix;                                   // [N x C x H x W]
    Tensor x_aug;                                   // [N x C x H' x W']
    std::vector<std::vector<double>> weights;       // [N][k], rows sum to 1
    std::vector<std::vector<std::size_t>> sources;  // [N][k] source rows
};

// k-way convex combination of distinct rows drawn without replacement.
// Output count equals input count. Fills only the x_mix side.
MixedBatch multiple_input_mixup(const Tensor& x, const MixupConfig& cfg, Rng& rng);

// Bilinear resize, half-pixel-center convention, clamped to the border.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Per-image brightness/contrast/saturation/hue in that fixed order,
// clamped to [0,1] after each stage. Single-channel inputs pass through.
Tensor color_jitter(const Tensor& x, const AugmentConfig& cfg, Rng& rng);

// Per-image rotation about the center plus translation; bilinear sampling
// of the inverse map, zero fill outside the source.
Tensor random_affine(const Tensor& x, const AugmentConfig& cfg, Rng& rng);

// mixup -> resize -> color_jitter -> random_affine.
MixedBatch synthesize_ood(const Tensor& x_id, const MixupConfig& mix_cfg,
                          const AugmentConfig& aug_cfg, Rng& rng);

}  // namespace mim::synth
