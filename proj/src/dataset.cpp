#include "rodenet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace rodenet {

namespace {

constexpr std::size_t kPixelBytes = 3 * 32 * 32;

Dataset parse_cifar(const std::vector<unsigned char>& bytes, const std::string& path) {
    std::size_t record = 0;
    int num_classes = 0;
    if (!bytes.empty() && bytes.size() % (kPixelBytes + 2) == 0) {
        record = kPixelBytes + 2;  // CIFAR-100: coarse + fine label
        num_classes = 100;
    } else if (!bytes.empty() && bytes.size() % (kPixelBytes + 1) == 0) {
        record = kPixelBytes + 1;  // CIFAR-10
        num_classes = 10;
    } else {
        throw std::runtime_error("load_cifar_file: " + path +
                                 " is not a multiple of a CIFAR record size");
    }

    Dataset ds;
    ds.num_classes = num_classes;
    const std::size_t count = bytes.size() / record;
    ds.examples.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
        const unsigned char* rec = bytes.data() + r * record;
        LabeledExample ex;
        ex.label = static_cast<int>(rec[record - 1 - kPixelBytes]);  // fine label
        ex.image = TensorF(3, 32, 32);
        const unsigned char* px = rec + (record - kPixelBytes);
        for (std::size_t i = 0; i < kPixelBytes; ++i) {
            ex.image.v[i] = static_cast<double>(px[i]) / 255.0;
        }
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace

Dataset load_cifar_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_cifar_file: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return parse_cifar(bytes, path);
}

Dataset load_cifar_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".bin") {
            files.push_back(entry.path().string());
        }
    }
    if (files.empty()) throw std::runtime_error("load_cifar_dir: no .bin files in " + dir);
    std::sort(files.begin(), files.end());
    Dataset all;
    for (const auto& f : files) {
        Dataset part = load_cifar_file(f);
        all.num_classes = part.num_classes;
        std::move(part.examples.begin(), part.examples.end(),
                  std::back_inserter(all.examples));
    }
    return all;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2 || spec.per_class < 1) {
        throw std::invalid_argument("make_synthetic: need >= 2 classes and >= 1 example each");
    }
    std::mt19937 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<TensorF> prototypes;
    prototypes.reserve(spec.num_classes);
    for (int k = 0; k < spec.num_classes; ++k) {
        TensorF proto(spec.channels, spec.height, spec.width);
        for (auto& e : proto.v) e = 0.5 + 0.25 * gauss(rng);
        prototypes.push_back(std::move(proto));
    }

    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.examples.reserve(static_cast<std::size_t>(spec.num_classes) * spec.per_class);
    for (int k = 0; k < spec.num_classes; ++k) {
        for (int i = 0; i < spec.per_class; ++i) {
            LabeledExample ex;
            ex.label = k;
            ex.image = prototypes[k];
            for (auto& e : ex.image.v) e += spec.noise * gauss(rng);
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

Normalization compute_normalization(const Dataset& train) {
    if (train.examples.empty()) {
        throw std::invalid_argument("compute_normalization: empty dataset");
    }
    const int channels = train.examples.front().image.c;
    Normalization norm;
    norm.mean.assign(channels, 0.0);
    norm.stddev.assign(channels, 0.0);

    std::vector<double> sum(channels, 0.0), sumsq(channels, 0.0);
    std::size_t per_channel = 0;
    for (const auto& ex : train.examples) {
        const TensorF& img = ex.image;
        per_channel = static_cast<std::size_t>(img.h) * img.w;
        for (int c = 0; c < channels; ++c) {
            for (int i = 0; i < img.h; ++i) {
                for (int j = 0; j < img.w; ++j) {
                    const double e = img.at(c, i, j);
                    sum[c] += e;
                    sumsq[c] += e * e;
                }
            }
        }
    }
    const double n = static_cast<double>(per_channel * train.examples.size());
    for (int c = 0; c < channels; ++c) {
        norm.mean[c] = sum[c] / n;
        const double var = sumsq[c] / n - norm.mean[c] * norm.mean[c];
        norm.stddev[c] = std::sqrt(std::max(var, 1e-12));
    }
    return norm;
}

TensorF normalize_image(const TensorF& image, const Normalization& norm) {
    if (static_cast<int>(norm.mean.size()) != image.c) {
        throw std::invalid_argument("normalize_image: channel count mismatch");
    }
    TensorF out = image;
    for (int c = 0; c < image.c; ++c) {
        const double m = norm.mean[c];
        const double inv = 1.0 / norm.stddev[c];
        for (int i = 0; i < image.h; ++i) {
            for (int j = 0; j < image.w; ++j) {
                out.at(c, i, j) = (out.at(c, i, j) - m) * inv;
            }
        }
    }
    return out;
}

}  // namespace rodenet
