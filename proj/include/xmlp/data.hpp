#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmlp/rng.hpp"
#include "xmlp/tensor.hpp"

namespace xmlp {

// Images stay in their 8-bit source form until batch assembly; augmentation
// runs in pixel space and normalization is applied last.
struct Dataset {
  int count = 0;
  int channels = 0, height = 0, width = 0;
  std::vector<uint8_t> images;  // count x channels x height x width
  std::vector<int> labels;
  int num_classes = 0;
  std::string split;  // "train" | "test"

  size_t image_size() const {
    return static_cast<size_t>(channels) * height * width;
  }
  const uint8_t* image(int i) const { return images.data() + i * image_size(); }
};

// IDX (MNIST-family) loading: big-endian magic 0x00000803 for images,
// 0x00000801 for labels. Parse errors name the offending byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, label + 3072 RGB bytes.
Dataset load_cifar10(const std::vector<std::string>& batch_files);

// Convenience loaders for the bundled dataset layouts.
Dataset load_mnist_like(const std::string& dir, const std::string& split);
Dataset load_cifar10_split(const std::string& dir, const std::string& split);

// Zero-pads every image symmetrically to target extents (28 -> 32 for the
// MNIST family). No-op when extents already match.
Dataset pad_images(const Dataset& d, int target_h, int target_w);

// Keeps the first n samples (0 = all); used for desk-scale subset runs.
Dataset subset(const Dataset& d, int n);

// Per-channel mean/std over a train split's raw 8-bit pixels.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;
};

NormStats compute_norm_stats(const Dataset& train);

struct AugmentPolicy {
  int pad_crop = 0;       // pad by k zero pixels, random-crop back
  float hflip_prob = 0.0f;
  float rotate_deg = 0.0f;  // uniform in [-deg, +deg], bilinear, zero fill

  bool active() const {
    return pad_crop > 0 || hflip_prob > 0.0f || rotate_deg > 0.0f;
  }
};

// Paper recipes: crop+flip for CIFAR-10, rotate+flip for the
// Tiny-ImageNet-style datasets, nothing for the MNIST family.
AugmentPolicy augment_policy_for(const std::string& dataset);

// Deterministic single transforms (float pixel buffers, values 0..255).
void flip_horizontal(std::vector<float>& img, int c, int h, int w);
void pad_crop_at(std::vector<float>& img, int c, int h, int w, int pad, int dy,
                 int dx);
void rotate_bilinear(std::vector<float>& img, int c, int h, int w,
                     float degrees);

// Policy-driven augmentation of one image (in place).
void augment_image(std::vector<float>& img, int c, int h, int w,
                   const AugmentPolicy& policy, Rng& rng);

// Assembles a normalized batch tensor from dataset rows `indices[begin,end)`,
// augmenting in pixel space first when a policy is given.
Tensor4 make_batch(const Dataset& d, const std::vector<int>& indices,
                   size_t begin, size_t end, const NormStats& stats,
                   const AugmentPolicy* policy, Rng* rng);

}  // namespace xmlp
