#pragma once

#include <string>
#include <vector>

#include "rodenet/tensor.hpp"

namespace rodenet {

struct LabeledExample {
    TensorF image;  // (C, H, W), pixel scale [0, 1] before normalization
    int label = 0;
};

struct Dataset {
    std::vector<LabeledExample> examples;
    int num_classes = 0;
};

/// Reads a CIFAR binary batch. Record layout is detected from the file size:
/// 3073 bytes per record (label + 3072 pixels) for CIFAR-10, 3074 bytes
/// (coarse label + fine label + 3072 pixels) for CIFAR-100; the fine label is
/// used. Pixels are R-then-G-then-B planes, row-major, scaled to [0, 1].
Dataset load_cifar_file(const std::string& path);

/// Loads every *.bin under a directory (sorted by name) as one dataset.
Dataset load_cifar_dir(const std::string& dir);

struct SyntheticSpec {
    int num_classes = 4;
    int per_class = 16;
    int channels = 3;
    int height = 8;
    int width = 8;
    double noise = 0.25;
    unsigned seed = 1;
};

/// Deterministic synthetic dataset: one Gaussian prototype per class plus
/// per-example noise. Same spec, same bytes.
Dataset make_synthetic(const SyntheticSpec& spec);

struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Per-channel statistics over a training split.
Normalization compute_normalization(const Dataset& train);

TensorF normalize_image(const TensorF& image, const Normalization& norm);

}  // namespace rodenet
