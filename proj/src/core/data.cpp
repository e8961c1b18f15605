#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "core/binio.hpp"
#include "core/rng.hpp"

namespace mim::data {

void validate_dataset(const Dataset& ds, std::size_t num_classes) {
    if (ds.images.rank() != 4) {
        throw DataError("dataset '" + ds.name + "': images must be [N x C x H x W], got " +
                        shape_str(ds.images.shape()));
    }
    for (double v : ds.images.values()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DataError("dataset '" + ds.name + "': pixel value " + std::to_string(v) +
                            " outside [0, 1]");
        }
    }
    if (ds.labels) {
        if (ds.labels->size() != ds.size()) {
            throw DataError("dataset '" + ds.name + "': label count does not match N");
        }
        if (num_classes > 0) {
            for (int y : *ds.labels) {
                if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
                    throw DataError("dataset '" + ds.name + "': label " + std::to_string(y) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
                }
            }
        }
    }
}

// --- batching --------------------------------------------------------------

std::vector<Batch> batches(const Dataset& ds, const BatchPlan& plan) {
    const std::size_t N = ds.size();
    if (plan.batch_size == 0 || plan.batch_size > N) {
        throw ConfigError("batches: batch size " + std::to_string(plan.batch_size) +
                          " invalid for dataset of " + std::to_string(N));
    }
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(plan.shuffle_seed);
    rng.shuffle(order);

    const auto sshape = ds.sample_shape();
    const std::size_t stride = shape_numel(sshape);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < N; start += plan.batch_size) {
        const std::size_t b = std::min(plan.batch_size, N - start);
        if (b < plan.batch_size && plan.drop_last) break;
        Batch batch;
        batch.indices.assign(order.begin() + start, order.begin() + start + b);
        std::vector<double> x(b * stride);
        for (std::size_t i = 0; i < b; ++i) {
            const auto src = ds.images.values().begin() + batch.indices[i] * stride;
            std::copy(src, src + stride, x.begin() + i * stride);
        }
        batch.x = Tensor::from_data({b, sshape[0], sshape[1], sshape[2]}, std::move(x));
        if (ds.labels) {
            std::vector<int> y(b);
            for (std::size_t i = 0; i < b; ++i) y[i] = (*ds.labels)[batch.indices[i]];
            batch.y = std::move(y);
        }
        out.push_back(std::move(batch));
    }
    return out;
}

// --- CIFAR-10 --------------------------------------------------------------

namespace {
constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 3 x 1024 planes
constexpr std::size_t kCifarPlane = 1024;   // 32 x 32
}  // namespace

Dataset decode_cifar_records(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    if (bytes.size() % kCifarRecord != 0) {
        throw DataError("cifar '" + name + "': file length " + std::to_string(bytes.size()) +
                        " is not a multiple of " + std::to_string(kCifarRecord));
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    std::vector<double> pixels(n * 3 * kCifarPlane);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t label = bytes[i * kCifarRecord];
        if (label > 9) {
            throw DataError("cifar '" + name + "': record " + std::to_string(i) + " has label " +
                            std::to_string(label) + " > 9");
        }
        labels[i] = label;
        for (std::size_t j = 0; j < 3 * kCifarPlane; ++j) {
            pixels[i * 3 * kCifarPlane + j] =
                static_cast<double>(bytes[i * kCifarRecord + 1 + j]) / 255.0;
        }
    }
    Dataset ds;
    ds.images = Tensor::from_data({n, 3, 32, 32}, std::move(pixels));
    ds.labels = std::move(labels);
    ds.name = name;
    return ds;
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

Dataset concat(std::vector<Dataset> parts, const std::string& name) {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    const auto sshape = parts.front().sample_shape();
    const std::size_t stride = shape_numel(sshape);
    std::vector<double> pixels;
    pixels.reserve(n * stride);
    std::vector<int> labels;
    labels.reserve(n);
    for (const auto& p : parts) {
        pixels.insert(pixels.end(), p.images.values().begin(), p.images.values().end());
        labels.insert(labels.end(), p.labels->begin(), p.labels->end());
    }
    Dataset ds;
    ds.images = Tensor::from_data({n, sshape[0], sshape[1], sshape[2]}, std::move(pixels));
    ds.labels = std::move(labels);
    ds.name = name;
    return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir_path) {
    std::vector<Dataset> train_parts;
    for (int i = 1; i <= 5; ++i) {
        const std::string path = dir_path + "/data_batch_" + std::to_string(i) + ".bin";
        train_parts.push_back(decode_cifar_records(read_file_bytes(path), path));
    }
    Dataset train = concat(std::move(train_parts), "cifar10-train");
    Dataset test =
        decode_cifar_records(read_file_bytes(dir_path + "/test_batch.bin"), "cifar10-test");
    test.name = "cifar10-test";
    validate_dataset(train, 10);
    validate_dataset(test, 10);
    return {std::move(train), std::move(test)};
}

// --- MIMD raw format -------------------------------------------------------

void save_raw_dataset(const Dataset& ds, const std::string& path) {
    validate_dataset(ds);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("save_raw_dataset: cannot open '" + path + "'");
    os.write("MIMD", 4);
    binio::write_u8(os, ds.labels ? 1 : 0);
    for (auto e : ds.images.shape()) binio::write_u32(os, static_cast<std::uint32_t>(e));
    for (double v : ds.images.values()) binio::write_f64(os, v);
    if (ds.labels) {
        for (int y : *ds.labels) binio::write_u32(os, static_cast<std::uint32_t>(y));
    }
    if (!os) throw DataError("save_raw_dataset: write to '" + path + "' failed");
}

Dataset load_raw_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_raw_dataset: cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "MIMD") {
        throw DataError("load_raw_dataset: '" + path + "' is not a MIMD dataset file");
    }
    const bool has_labels = binio::read_u8(is, "label flag") != 0;
    const std::size_t n = binio::read_u32(is, "N");
    const std::size_t c = binio::read_u32(is, "C");
    const std::size_t h = binio::read_u32(is, "H");
    const std::size_t w = binio::read_u32(is, "W");
    std::vector<double> pixels(n * c * h * w);
    for (auto& v : pixels) {
        v = binio::read_f64(is, "pixel data");
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DataError("load_raw_dataset: pixel value " + std::to_string(v) +
                            " outside [0, 1] in '" + path + "'");
        }
    }
    Dataset ds;
    ds.images = Tensor::from_data({n, c, h, w}, std::move(pixels));
    if (has_labels) {
        std::vector<int> labels(n);
        for (auto& y : labels) y = static_cast<int>(binio::read_u32(is, "label"));
        ds.labels = std::move(labels);
    }
    ds.name = path;
    return ds;
}

// --- synthetic benchmark ---------------------------------------------------

SynthBenchmark synth_gaussian_benchmark(const SynthConfig& cfg) {
    if (cfg.num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
    if (cfg.sigma <= 0.0) throw ConfigError("synth: sigma must be positive");
    if (cfg.n_per_class < 5) throw ConfigError("synth: n_per_class must be >= 5");

    const double r = cfg.class_mean_radius;
    const double half_extent = 2.0 * r + 4.0 * cfg.sigma;  // covers the ring plus tails
    const auto encode = [half_extent](double v) {
        return std::clamp((v + half_extent) / (2.0 * half_extent), 0.0, 1.0);
    };
    std::ostringstream map_desc;
    map_desc << "map=(x+" << half_extent << ")/" << 2.0 * half_extent;

    Rng rng(cfg.seed);
    const std::size_t K = cfg.num_classes;

    // Per class: first 80% of draws go to train, the rest to test.
    std::vector<double> train_px, test_px;
    std::vector<int> train_y, test_y;
    const std::size_t n_train_pc = cfg.n_per_class * 4 / 5;
    for (std::size_t c = 0; c < K; ++c) {
        const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(K);
        const double mx = r * std::cos(angle);
        const double my = r * std::sin(angle);
        for (std::size_t i = 0; i < cfg.n_per_class; ++i) {
            const double x = mx + cfg.sigma * rng.normal();
            const double y = my + cfg.sigma * rng.normal();
            auto& px = (i < n_train_pc) ? train_px : test_px;
            auto& lab = (i < n_train_pc) ? train_y : test_y;
            px.push_back(encode(x));
            px.push_back(encode(y));
            lab.push_back(static_cast<int>(c));
        }
    }

    const std::size_t n_ood = cfg.n_ood > 0 ? cfg.n_ood : K * cfg.n_per_class / 5;
    std::vector<double> ood_px;
    for (std::size_t i = 0; i < n_ood; ++i) {
        double x, y;
        if (cfg.ood_kind == SynthConfig::OodKind::Ring) {
            const double theta = rng.uniform(0.0, 2.0 * M_PI);
            x = 2.0 * r * std::cos(theta);
            y = 2.0 * r * std::sin(theta);
        } else {
            x = 2.0 * r + cfg.sigma * rng.normal();
            y = cfg.sigma * rng.normal();
        }
        ood_px.push_back(encode(x));
        ood_px.push_back(encode(y));
    }

    const auto make = [&](std::vector<double> px, std::optional<std::vector<int>> labels,
                          const std::string& role) {
        Dataset ds;
        const std::size_t n = px.size() / 2;
        ds.images = Tensor::from_data({n, 1, 1, 2}, std::move(px));
        ds.labels = std::move(labels);
        std::ostringstream name;
        // no commas: these names end up as fields in report.csv
        name << "synth-" << role << "[K=" << K << ";r=" << r << ";sigma=" << cfg.sigma << ";"
             << map_desc.str() << "]";
        ds.name = name.str();
        validate_dataset(ds, K);
        return ds;
    };

    SynthBenchmark bench;
    bench.id_train = make(std::move(train_px), std::move(train_y), "id-train");
    bench.id_test = make(std::move(test_px), std::move(test_y), "id-test");
    bench.ood_test = make(std::move(ood_px), std::nullopt,
                          cfg.ood_kind == SynthConfig::OodKind::Ring ? "ood-ring" : "ood-shifted");
    return bench;
}

}  // namespace mim::data
