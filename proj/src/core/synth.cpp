#include "core/synth.hpp"

#include <algorithm>
#include <cmath>

namespace mim::synth {

namespace {

void check_interval(const Interval& iv, const char* what) {
    if (iv.first > iv.second) {
        throw ConfigError(std::string("augment: ") + what + " interval is not ordered");
    }
}

void check_nchw(const Tensor& x, const char* op) {
    if (x.rank() != 4) throw ShapeError(std::string(op) + ": input must be [N x C x H x W]");
}

}  // namespace

void AugmentConfig::validate() const {
    if (target_h == 0 || target_w == 0) throw ConfigError("augment: non-positive target size");
    check_interval(brightness, "brightness");
    check_interval(contrast, "contrast");
    check_interval(saturation, "saturation");
    check_interval(hue, "hue");
    check_interval(rotation_degrees, "rotation");
    check_interval(translate_frac, "translate");
    if (hue.first < -0.5 || hue.second > 0.5) throw ConfigError("augment: hue outside [-0.5, 0.5]");
    if (rotation_degrees.first < -90.0 || rotation_degrees.second > 90.0) {
        throw ConfigError("augment: rotation outside [-90, 90]");
    }
    if (translate_frac.first < 0.0 || translate_frac.second > 0.2) {
        throw ConfigError("augment: translation outside [0, 0.2]");
    }
}

AugmentConfig AugmentConfig::identity(std::size_t h, std::size_t w) {
    AugmentConfig cfg;
    cfg.target_h = h;
    cfg.target_w = w;
    cfg.brightness = {1.0, 1.0};
    cfg.contrast = {1.0, 1.0};
    cfg.saturation = {1.0, 1.0};
    cfg.hue = {0.0, 0.0};
    cfg.rotation_degrees = {0.0, 0.0};
    cfg.translate_frac = {0.0, 0.0};
    return cfg;
}

// --- mixup -----------------------------------------------------------------

MixedBatch multiple_input_mixup(const Tensor& x, const MixupConfig& cfg, Rng& rng) {
    check_nchw(x, "mixup");
    const std::size_t N = x.shape()[0];
    if (cfg.k < 1) throw ConfigError("mixup: k must be >= 1");
    if (cfg.k > N) {
        throw ConfigError("mixup: k=" + std::to_string(cfg.k) + " exceeds batch size " +
                          std::to_string(N));
    }
    const std::size_t stride = x.size() / N;
    std::vector<double> out(x.size(), 0.0);
    MixedBatch mb;
    mb.weights.resize(N);
    mb.sources.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        mb.sources[i] = rng.sample_without_replacement(N, cfg.k);
        if (cfg.weight_mode == MixupConfig::WeightMode::Equal) {
            mb.weights[i].assign(cfg.k, 1.0 / static_cast<double>(cfg.k));
        } else {
            mb.weights[i] = rng.dirichlet(cfg.k, cfg.alpha);
        }
        for (std::size_t j = 0; j < cfg.k; ++j) {
            const double w = mb.weights[i][j];
            const auto src = x.values().begin() + mb.sources[i][j] * stride;
            for (std::size_t p = 0; p < stride; ++p) out[i * stride + p] += w * src[p];
        }
    }
    mb.x_mix = Tensor::from_data(x.shape(), std::move(out));
    return mb;
}

// --- resize ----------------------------------------------------------------

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    check_nchw(x, "resize");
    if (out_h == 0 || out_w == 0) throw ConfigError("resize: non-positive target size");
    const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    std::vector<double> out(N * C * out_h * out_w);

    // Source coordinate for output index d: (d + 0.5) * in/out - 0.5, clamped.
    const auto src_coord = [](std::size_t d, std::size_t in, std::size_t out_sz) {
        const double s = (static_cast<double>(d) + 0.5) *
                             (static_cast<double>(in) / static_cast<double>(out_sz)) -
                         0.5;
        return std::clamp(s, 0.0, static_cast<double>(in - 1));
    };

    for (std::size_t oh = 0; oh < out_h; ++oh) {
        const double sy = src_coord(oh, H, out_h);
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, H - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t ow = 0; ow < out_w; ++ow) {
            const double sx = src_coord(ow, W, out_w);
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, W - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const auto at = [&](std::size_t h, std::size_t w) {
                        return x.values()[((n * C + c) * H + h) * W + w];
                    };
                    const double top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    const double bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    out[((n * C + c) * out_h + oh) * out_w + ow] = top * (1.0 - fy) + bot * fy;
                }
        }
    }
    return Tensor::from_data({N, C, out_h, out_w}, std::move(out));
}

// --- color jitter ----------------------------------------------------------

namespace {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Tensor color_jitter(const Tensor& x, const AugmentConfig& cfg, Rng& rng) {
    check_nchw(x, "color_jitter");
    const std::size_t C = x.shape()[1];
    if (C == 1) return x;  // geometric-only path for single-channel data
    if (C != 3) {
        throw ShapeError("color_jitter: expected 1 or 3 channels, got " + std::to_string(C));
    }
    const std::size_t N = x.shape()[0], HW = x.shape()[2] * x.shape()[3];
    std::vector<double> out = x.values();

    for (std::size_t n = 0; n < N; ++n) {
        const double b = rng.uniform(cfg.brightness.first, cfg.brightness.second);
        const double c = rng.uniform(cfg.contrast.first, cfg.contrast.second);
        const double s = rng.uniform(cfg.saturation.first, cfg.saturation.second);
        const double h = rng.uniform(cfg.hue.first, cfg.hue.second);

        double* R = out.data() + (n * 3 + 0) * HW;
        double* G = out.data() + (n * 3 + 1) * HW;
        double* B = out.data() + (n * 3 + 2) * HW;
        const auto gray = [&](std::size_t p) {
            return 0.299 * R[p] + 0.587 * G[p] + 0.114 * B[p];
        };

        // brightness
        for (std::size_t p = 0; p < HW; ++p) {
            R[p] = clamp01(b * R[p]);
            G[p] = clamp01(b * G[p]);
            B[p] = clamp01(b * B[p]);
        }
        // contrast, toward the mean gray level
        double mean_gray = 0.0;
        for (std::size_t p = 0; p < HW; ++p) mean_gray += gray(p);
        mean_gray /= static_cast<double>(HW);
        for (std::size_t p = 0; p < HW; ++p) {
            R[p] = clamp01(c * R[p] + (1.0 - c) * mean_gray);
            G[p] = clamp01(c * G[p] + (1.0 - c) * mean_gray);
            B[p] = clamp01(c * B[p] + (1.0 - c) * mean_gray);
        }
        // saturation, toward per-pixel gray
        for (std::size_t p = 0; p < HW; ++p) {
            const double g = gray(p);
            R[p] = clamp01(s * R[p] + (1.0 - s) * g);
            G[p] = clamp01(s * G[p] + (1.0 - s) * g);
            B[p] = clamp01(s * B[p] + (1.0 - s) * g);
        }
        // hue: luma-preserving rotation of the chromaticity plane (YIQ)
        if (h != 0.0) {
            const double angle = 2.0 * M_PI * h;
            const double ca = std::cos(angle), sa = std::sin(angle);
            for (std::size_t p = 0; p < HW; ++p) {
                const double y = 0.299 * R[p] + 0.587 * G[p] + 0.114 * B[p];
                const double iq_i = 0.5959 * R[p] - 0.2746 * G[p] - 0.3213 * B[p];
                const double iq_q = 0.2115 * R[p] - 0.5227 * G[p] + 0.3112 * B[p];
                const double ri = ca * iq_i - sa * iq_q;
                const double rq = sa * iq_i + ca * iq_q;
                R[p] = clamp01(y + 0.956 * ri + 0.619 * rq);
                G[p] = clamp01(y - 0.272 * ri - 0.647 * rq);
                B[p] = clamp01(y - 1.106 * ri + 1.703 * rq);
            }
        }
    }
    return Tensor::from_data(x.shape(), std::move(out));
}

// --- random affine ---------------------------------------------------------

Tensor random_affine(const Tensor& x, const AugmentConfig& cfg, Rng& rng) {
    check_nchw(x, "random_affine");
    const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    std::vector<double> out(x.size(), 0.0);
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;

    for (std::size_t n = 0; n < N; ++n) {
        const double theta =
            rng.uniform(cfg.rotation_degrees.first, cfg.rotation_degrees.second) * M_PI / 180.0;
        double tx = rng.uniform(cfg.translate_frac.first, cfg.translate_frac.second) *
                    static_cast<double>(W);
        double ty = rng.uniform(cfg.translate_frac.first, cfg.translate_frac.second) *
                    static_cast<double>(H);
        if (rng.uniform() < 0.5) tx = -tx;
        if (rng.uniform() < 0.5) ty = -ty;

        // Forward map is rotation about the center followed by translation;
        // each output center is pulled back through the inverse.
        const double ca = std::cos(-theta), sa = std::sin(-theta);
        for (std::size_t oh = 0; oh < H; ++oh)
            for (std::size_t ow = 0; ow < W; ++ow) {
                const double dx = static_cast<double>(ow) - tx - cx;
                const double dy = static_cast<double>(oh) - ty - cy;
                const double sx = ca * dx - sa * dy + cx;
                const double sy = sa * dx + ca * dy + cy;

                const double fx0 = std::floor(sx);
                const double fy0 = std::floor(sy);
                const double wx = sx - fx0;
                const double wy = sy - fy0;
                const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(fx0);
                const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(fy0);

                for (std::size_t c = 0; c < C; ++c) {
                    const auto at = [&](std::ptrdiff_t h, std::ptrdiff_t w) {
                        if (h < 0 || h >= static_cast<std::ptrdiff_t>(H) || w < 0 ||
                            w >= static_cast<std::ptrdiff_t>(W)) {
                            return 0.0;  // zero fill
                        }
                        return x.values()[((n * C + c) * H + h) * W + w];
                    };
                    const double top = at(y0, x0) * (1.0 - wx) + at(y0, x0 + 1) * wx;
                    const double bot = at(y0 + 1, x0) * (1.0 - wx) + at(y0 + 1, x0 + 1) * wx;
                    out[((n * C + c) * H + oh) * W + ow] = top * (1.0 - wy) + bot * wy;
                }
            }
    }
    return Tensor::from_data(x.shape(), std::move(out));
}

// --- composition -----------------------------------------------------------

MixedBatch synthesize_ood(const Tensor& x_id, const MixupConfig& mix_cfg,
                          const AugmentConfig& aug_cfg, Rng& rng) {
    aug_cfg.validate();
    MixedBatch mb = multiple_input_mixup(x_id, mix_cfg, rng);
    Tensor t = resize_bilinear(mb.x_mix, aug_cfg.target_h, aug_cfg.target_w);
    t = color_jitter(t, aug_cfg, rng);
    mb.x_aug = random_affine(t, aug_cfg, rng);
    return mb;
}

}  // namespace mim::synth
