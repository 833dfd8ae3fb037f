#include "xmlp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "xmlp/errors.hpp"

namespace xmlp {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  f.seekg(0, std::ios::end);
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw io_error("read failed: " + path);
  return bytes;
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t offset,
                   const std::string& path) {
  if (offset + 4 > b.size())
    throw parse_error(path + ": truncated at byte offset " +
                      std::to_string(offset) + " (expected 4-byte field)");
  return (static_cast<uint32_t>(b[offset]) << 24) |
         (static_cast<uint32_t>(b[offset + 1]) << 16) |
         (static_cast<uint32_t>(b[offset + 2]) << 8) |
         static_cast<uint32_t>(b[offset + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img_bytes = read_file(images_path);
  const uint32_t img_magic = read_be32(img_bytes, 0, images_path);
  if (img_magic != kIdxImagesMagic)
    throw parse_error(images_path + ": bad magic at byte offset 0 (got 0x" +
                      [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof(buf), "%08x", img_magic);
                        return std::string(buf);
                      }() +
                      ", want 0x00000803)");
  const uint32_t n = read_be32(img_bytes, 4, images_path);
  const uint32_t rows = read_be32(img_bytes, 8, images_path);
  const uint32_t cols = read_be32(img_bytes, 12, images_path);
  const size_t expect = 16 + static_cast<size_t>(n) * rows * cols;
  if (img_bytes.size() < expect)
    throw parse_error(images_path + ": truncated at byte offset " +
                      std::to_string(img_bytes.size()) + " (header declares " +
                      std::to_string(expect) + " bytes)");

  const auto lbl_bytes = read_file(labels_path);
  const uint32_t lbl_magic = read_be32(lbl_bytes, 0, labels_path);
  if (lbl_magic != kIdxLabelsMagic)
    throw parse_error(labels_path + ": bad magic at byte offset 0 (got 0x" +
                      [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof(buf), "%08x", lbl_magic);
                        return std::string(buf);
                      }() +
                      ", want 0x00000801)");
  const uint32_t n_labels = read_be32(lbl_bytes, 4, labels_path);
  if (n_labels != n)
    throw parse_error(labels_path + ": item count " + std::to_string(n_labels) +
                      " at byte offset 4 does not match images count " +
                      std::to_string(n));
  if (lbl_bytes.size() < 8 + static_cast<size_t>(n))
    throw parse_error(labels_path + ": truncated at byte offset " +
                      std::to_string(lbl_bytes.size()) + " (header declares " +
                      std::to_string(8 + n) + " bytes)");

  Dataset d;
  d.count = static_cast<int>(n);
  d.channels = 1;
  d.height = static_cast<int>(rows);
  d.width = static_cast<int>(cols);
  d.images.assign(img_bytes.begin() + 16, img_bytes.begin() + expect);
  d.labels.resize(n);
  int max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    d.labels[i] = lbl_bytes[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = max_label + 1;
  return d;
}

Dataset load_cifar10(const std::vector<std::string>& batch_files) {
  constexpr size_t kRecord = 3073;
  constexpr size_t kPixels = 3072;
  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 10;
  for (const auto& path : batch_files) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kRecord != 0)
      throw parse_error(path + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of the 3073-byte record");
    const size_t records = bytes.size() / kRecord;
    for (size_t r = 0; r < records; ++r) {
      const uint8_t label = bytes[r * kRecord];
      if (label > 9)
        throw parse_error(path + ": label " + std::to_string(label) +
                          " out of range at byte offset " +
                          std::to_string(r * kRecord));
      d.labels.push_back(label);
      const uint8_t* px = bytes.data() + r * kRecord + 1;
      d.images.insert(d.images.end(), px, px + kPixels);
    }
  }
  d.count = static_cast<int>(d.labels.size());
  if (d.count == 0) throw parse_error("cifar10: no records found");
  return d;
}

Dataset load_mnist_like(const std::string& dir, const std::string& split) {
  const std::string prefix = split == "train" ? "train" : "t10k";
  auto d = load_idx(dir + "/" + prefix + "-images-idx3-ubyte",
                    dir + "/" + prefix + "-labels-idx1-ubyte");
  d.split = split;
  return d;
}

Dataset load_cifar10_split(const std::string& dir, const std::string& split) {
  std::vector<std::string> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i)
      files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  } else {
    files.push_back(dir + "/test_batch.bin");
  }
  auto d = load_cifar10(files);
  d.split = split;
  return d;
}

Dataset pad_images(const Dataset& d, int target_h, int target_w) {
  if (target_h < d.height || target_w < d.width)
    throw usage_error("pad_images: target extents smaller than source");
  if (target_h == d.height && target_w == d.width) return d;
  Dataset out = d;
  out.height = target_h;
  out.width = target_w;
  out.images.assign(static_cast<size_t>(d.count) * d.channels * target_h * target_w,
                    0);
  const int off_h = (target_h - d.height) / 2;
  const int off_w = (target_w - d.width) / 2;
  for (int i = 0; i < d.count; ++i)
    for (int c = 0; c < d.channels; ++c)
      for (int y = 0; y < d.height; ++y) {
        const uint8_t* src = d.images.data() +
                             ((static_cast<size_t>(i) * d.channels + c) * d.height +
                              y) * d.width;
        uint8_t* dst = out.images.data() +
                       ((static_cast<size_t>(i) * d.channels + c) * target_h +
                        (y + off_h)) * target_w + off_w;
        std::memcpy(dst, src, d.width);
      }
  return out;
}

Dataset subset(const Dataset& d, int n) {
  if (n <= 0 || n >= d.count) return d;
  Dataset out = d;
  out.count = n;
  out.images.resize(static_cast<size_t>(n) * d.image_size());
  out.labels.resize(n);
  return out;
}

NormStats compute_norm_stats(const Dataset& train) {
  NormStats s;
  s.mean.assign(train.channels, 0.0f);
  s.std.assign(train.channels, 1.0f);
  const size_t per_channel = static_cast<size_t>(train.height) * train.width;
  const size_t count = static_cast<size_t>(train.count) * per_channel;
  if (count == 0) throw usage_error("compute_norm_stats: empty dataset");
  for (int c = 0; c < train.channels; ++c) {
    double sum = 0.0;
    for (int i = 0; i < train.count; ++i) {
      const uint8_t* px = train.image(i) + c * per_channel;
      for (size_t p = 0; p < per_channel; ++p) sum += px[p];
    }
    const double mean = sum / static_cast<double>(count);
    double ssq = 0.0;
    for (int i = 0; i < train.count; ++i) {
      const uint8_t* px = train.image(i) + c * per_channel;
      for (size_t p = 0; p < per_channel; ++p) {
        const double dv = px[p] - mean;
        ssq += dv * dv;
      }
    }
    double sd = std::sqrt(ssq / static_cast<double>(count));
    if (sd < 1e-6) sd = 1.0;  // constant channel normalizes to zero
    s.mean[c] = static_cast<float>(mean);
    s.std[c] = static_cast<float>(sd);
  }
  return s;
}

AugmentPolicy augment_policy_for(const std::string& dataset) {
  AugmentPolicy p;
  if (dataset == "cifar10" || dataset == "cifar100") {
    p.pad_crop = 4;
    p.hflip_prob = 0.5f;
  } else if (dataset == "tiny-imagenet" || dataset == "caltech256" ||
             dataset == "flowers102" || dataset == "food101") {
    p.rotate_deg = 20.0f;
    p.hflip_prob = 0.5f;
  }
  // MNIST family: none
  return p;
}

void flip_horizontal(std::vector<float>& img, int c, int h, int w) {
  for (int ic = 0; ic < c; ++ic)
    for (int y = 0; y < h; ++y) {
      float* row = img.data() + (static_cast<size_t>(ic) * h + y) * w;
      std::reverse(row, row + w);
    }
}

void pad_crop_at(std::vector<float>& img, int c, int h, int w, int pad, int dy,
                 int dx) {
  if (pad <= 0) return;
  if (dy < 0 || dy > 2 * pad || dx < 0 || dx > 2 * pad)
    throw usage_error("pad_crop_at: crop offset out of range");
  const int ph = h + 2 * pad, pw = w + 2 * pad;
  std::vector<float> padded(static_cast<size_t>(c) * ph * pw, 0.0f);
  for (int ic = 0; ic < c; ++ic)
    for (int y = 0; y < h; ++y)
      std::copy(img.begin() + (static_cast<size_t>(ic) * h + y) * w,
                img.begin() + (static_cast<size_t>(ic) * h + y) * w + w,
                padded.begin() + (static_cast<size_t>(ic) * ph + y + pad) * pw +
                    pad);
  for (int ic = 0; ic < c; ++ic)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img[(static_cast<size_t>(ic) * h + y) * w + x] =
            padded[(static_cast<size_t>(ic) * ph + y + dy) * pw + x + dx];
}

void rotate_bilinear(std::vector<float>& img, int c, int h, int w,
                     float degrees) {
  const float rad = degrees * 3.14159265358979323846f / 180.0f;
  const float cs = std::cos(rad), sn = std::sin(rad);
  const float cy = (h - 1) * 0.5f, cx = (w - 1) * 0.5f;
  std::vector<float> out(img.size(), 0.0f);
  for (int ic = 0; ic < c; ++ic) {
    const float* src = img.data() + static_cast<size_t>(ic) * h * w;
    float* dst = out.data() + static_cast<size_t>(ic) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // inverse rotation about the image center, zero fill outside
        const float sy = cy + (y - cy) * cs - (x - cx) * sn;
        const float sx = cx + (y - cy) * sn + (x - cx) * cs;
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const float fy = sy - y0, fx = sx - x0;
        float acc = 0.0f;
        for (int oy = 0; oy <= 1; ++oy)
          for (int ox = 0; ox <= 1; ++ox) {
            const int yy = y0 + oy, xx = x0 + ox;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const float wgt = (oy ? fy : 1.0f - fy) * (ox ? fx : 1.0f - fx);
            acc += wgt * src[yy * w + xx];
          }
        dst[y * w + x] = acc;
      }
  }
  img = std::move(out);
}

void augment_image(std::vector<float>& img, int c, int h, int w,
                   const AugmentPolicy& policy, Rng& rng) {
  if (policy.pad_crop > 0) {
    const int dy = static_cast<int>(rng.uniform_int(2 * policy.pad_crop + 1));
    const int dx = static_cast<int>(rng.uniform_int(2 * policy.pad_crop + 1));
    pad_crop_at(img, c, h, w, policy.pad_crop, dy, dx);
  }
  if (policy.hflip_prob > 0.0f && rng.bernoulli(policy.hflip_prob))
    flip_horizontal(img, c, h, w);
  if (policy.rotate_deg > 0.0f) {
    const float deg = rng.uniform(-policy.rotate_deg, policy.rotate_deg);
    rotate_bilinear(img, c, h, w, deg);
  }
}

Tensor4 make_batch(const Dataset& d, const std::vector<int>& indices,
                   size_t begin, size_t end, const NormStats& stats,
                   const AugmentPolicy* policy, Rng* rng) {
  if (end <= begin || end > indices.size())
    throw usage_error("make_batch: bad index range");
  if (static_cast<int>(stats.mean.size()) != d.channels)
    throw shape_error("make_batch: stats channel count mismatch");
  const int n = static_cast<int>(end - begin);
  Tensor4 out(n, d.channels, d.height, d.width);
  std::vector<float> work(d.image_size());
  const size_t per_channel = static_cast<size_t>(d.height) * d.width;
  for (int b = 0; b < n; ++b) {
    const uint8_t* src = d.image(indices[begin + b]);
    for (size_t i = 0; i < work.size(); ++i) work[i] = src[i];
    if (policy && policy->active()) {
      if (!rng) throw usage_error("make_batch: augmentation needs an rng");
      augment_image(work, d.channels, d.height, d.width, *policy, *rng);
    }
    float* dst = out.data.data() + static_cast<size_t>(b) * d.image_size();
    for (int c = 0; c < d.channels; ++c) {
      const float mean = stats.mean[c], inv = 1.0f / stats.std[c];
      for (size_t p = 0; p < per_channel; ++p)
        dst[c * per_channel + p] = (work[c * per_channel + p] - mean) * inv;
    }
  }
  return out;
}

}  // namespace xmlp
