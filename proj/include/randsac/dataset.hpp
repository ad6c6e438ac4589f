#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "randsac/image.hpp"

namespace randsac {

// In-memory labeled image set; all images share dimensions and labels lie
// in [0, num_classes).
struct Dataset {
    std::vector<Image> images;
    std::vector<int> labels;
    int num_classes = 0;
    std::string source;

    int count() const { return static_cast<int>(images.size()); }
    void validate() const;

    // First `n` samples (or all, if fewer).
    Dataset subset(int n) const;
};

// Strict parser for the standard CIFAR binary batch layout: per record one
// label byte (CIFAR-10) or two (CIFAR-100: coarse then fine), followed by
// 3072 channel-planar pixel bytes. Pixels are scaled to [0,1].
// `variant` is "cifar10" or "cifar100"; `split` is "train" or "test".
Dataset load_cifar(const std::string& dir, const std::string& variant, const std::string& split);

// Parses a single CIFAR record already in memory; exposed for round-trip
// testing against raw bytes.
Image decode_cifar_pixels(const std::uint8_t* planar3072);
void encode_cifar_pixels(const Image& img, std::uint8_t* planar3072);

// Class-per-subdirectory ingestion of PNG/PPM files; classes and files are
// ordered lexicographically by path.
Dataset load_image_dir(const std::string& dir);

}  // namespace randsac
