#include "xmlp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace xmlp {

LayerCost analytic_layer_cost(const LayerSpec& s, int index, int conv_kernel) {
  s.validate();
  LayerCost c;
  c.index = index;
  c.spec = s;
  const int64_t eps = s.expansion;
  const int64_t ci = s.c_in, co = s.c_out;
  const int64_t hi = s.h_in, ho = s.h_out, wi = s.w_in, wo = s.w_out;

  switch (s.variant) {
    case LayerVariant::basic:
    case LayerVariant::superior:
      c.spatial_dense_params = wi * wo + hi * ho;
      c.spatial_macs = ci * hi * wi * wo + ci * wo * hi * ho;
      break;
    case LayerVariant::expansion:
    case LayerVariant::alternate:
      c.spatial_dense_params =
          wi * (eps * wo) + (eps * wo) * wo + hi * (eps * ho) + (eps * ho) * ho;
      if (s.variant == LayerVariant::expansion) {
        c.spatial_macs = ci * hi * (wi * eps * wo + eps * wo * wo) +
                         ci * wo * (hi * eps * ho + eps * ho * ho);
        c.prelu_params += 2;
      } else {
        // width, height, width, height interleaved
        c.spatial_macs = ci * hi * wi * (eps * wo)          // w_in -> eW'
                         + ci * (eps * wo) * hi * (eps * ho)  // h_in -> eH'
                         + ci * (eps * ho) * (eps * wo) * wo  // eW' -> W'
                         + ci * wo * (eps * ho) * ho;         // eH' -> H'
        c.prelu_params += 4;
      }
      break;
  }

  // channel block: expand + project, two PReLUs, BN(e*C') + BN(C')
  c.channel_dense_params = ci * (eps * co) + (eps * co) * co;
  c.channel_macs = ho * wo * (ci * (eps * co) + (eps * co) * co);
  c.prelu_params += 2;
  // trunk BNs on c_in (bn_in, bn_v, bn_o) + channel-block BNs
  c.bn_affine_params = 2 * (3 * ci + eps * co + co);

  if (s.variant == LayerVariant::superior) {
    c.channel_dense_params += co * (eps * co) + (eps * co) * co;
    c.channel_macs += ho * wo * (co * (eps * co) + (eps * co) * co);
    c.prelu_params += 2;
    c.bn_affine_params += 2 * (eps * co + co);
  }

  const int64_t k2 = static_cast<int64_t>(conv_kernel) * conv_kernel;
  c.conv_params = k2 * ci * co;
  c.fc_spatial_params = (hi * wi) * (ho * wo);
  c.conv_macs = ho * wo * ci * co * k2;
  c.fc_spatial_macs = (hi * wi) * (ho * wo) * ci;
  return c;
}

CostReport analytic_model_cost(const ModelSpec& spec, int conv_kernel) {
  CostReport r;
  r.conv_kernel = conv_kernel;
  const auto schedule = layer_schedule(spec);
  for (size_t i = 0; i < schedule.size(); ++i)
    r.layers.push_back(
        analytic_layer_cost(schedule[i], static_cast<int>(i), conv_kernel));
  const int64_t c_final = schedule.back().c_out;
  r.classifier_params = c_final * spec.num_classes + spec.num_classes;
  r.classifier_macs = c_final * spec.num_classes;
  return r;
}

int64_t CostReport::total_params() const {
  int64_t t = classifier_params;
  for (const auto& l : layers) t += l.total_params();
  return t;
}

int64_t CostReport::total_macs() const {
  int64_t t = classifier_macs;
  for (const auto& l : layers) t += l.total_macs();
  return t;
}

std::string CostReport::table() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-5s %-22s %12s %12s %10s %8s %12s %14s %12s %14s\n", "layer",
                "shape (CxHxW->C'xH'xW')", "spatial_par", "channel_par",
                "bn_par", "prelu", "macs", "conv_macs(K)", "conv_par(K)",
                "fc_spatial_par");
  os << buf;
  for (const auto& l : layers) {
    char shape[64];
    std::snprintf(shape, sizeof(shape), "%dx%dx%d->%dx%dx%d", l.spec.c_in,
                  l.spec.h_in, l.spec.w_in, l.spec.c_out, l.spec.h_out,
                  l.spec.w_out);
    std::snprintf(buf, sizeof(buf),
                  "%-5d %-22s %12lld %12lld %10lld %8lld %12lld %14lld %12lld %14lld\n",
                  l.index, shape,
                  static_cast<long long>(l.spatial_dense_params),
                  static_cast<long long>(l.channel_dense_params),
                  static_cast<long long>(l.bn_affine_params),
                  static_cast<long long>(l.prelu_params),
                  static_cast<long long>(l.total_macs()),
                  static_cast<long long>(l.conv_macs),
                  static_cast<long long>(l.conv_params),
                  static_cast<long long>(l.fc_spatial_params));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "classifier params: %lld\ntotal params: %lld\ntotal macs "
                "(per sample, dense maps): %lld\nconv kernel K = %d\n",
                static_cast<long long>(classifier_params),
                static_cast<long long>(total_params()),
                static_cast<long long>(total_macs()), conv_kernel);
  os << buf;
  return os.str();
}

std::string CostReport::key_values() const {
  std::ostringstream os;
  for (const auto& l : layers) {
    const std::string p = "layer" + std::to_string(l.index) + ".";
    os << p << "spatial_dense_params=" << l.spatial_dense_params << "\n";
    os << p << "channel_dense_params=" << l.channel_dense_params << "\n";
    os << p << "bn_affine_params=" << l.bn_affine_params << "\n";
    os << p << "prelu_params=" << l.prelu_params << "\n";
    os << p << "total_params=" << l.total_params() << "\n";
    os << p << "macs=" << l.total_macs() << "\n";
    os << p << "conv_macs=" << l.conv_macs << "\n";
    os << p << "conv_params=" << l.conv_params << "\n";
    os << p << "fc_spatial_params=" << l.fc_spatial_params << "\n";
    os << p << "fc_spatial_macs=" << l.fc_spatial_macs << "\n";
  }
  os << "classifier_params=" << classifier_params << "\n";
  os << "total_params=" << total_params() << "\n";
  os << "total_macs=" << total_macs() << "\n";
  os << "conv_kernel=" << conv_kernel << "\n";
  return os.str();
}

int64_t paper_xmlp_params_square(int64_t h, int64_t c) { return 2 * h * h + c * c; }
int64_t paper_xmlp_spatial_params_square(int64_t h) { return 2 * h * h; }
int64_t paper_fc_spatial_params_square(int64_t h) { return h * h * h * h; }
int64_t paper_conv_params_square(int64_t c, int64_t k) { return k * k * c * c; }
int64_t paper_xmlp_macs_square(int64_t h, int64_t c) {
  return h * h * c * (h + h + c);
}
int64_t paper_xmlp_channel_macs_square(int64_t h, int64_t c) {
  return h * h * c * c;
}
int64_t paper_conv_macs_square(int64_t h, int64_t c, int64_t k) {
  return h * h * c * c * k * k;
}
int64_t paper_fc_spatial_macs_square(int64_t h, int64_t c) {
  return h * h * h * h * c;
}

RestoredKernel restore_spatial_weights(const DenseWeight& w1,
                                       const DenseWeight& w2, int layer_index) {
  RestoredKernel k;
  k.layer_index = layer_index;
  k.h = w2.rows;
  k.w = w1.rows;
  k.h_out = w2.cols;
  k.w_out = w1.cols;
  k.source_w1 = w1;
  k.source_w2 = w2;
  k.kernel.resize(static_cast<size_t>(k.h) * k.w * k.h_out * k.w_out);
  size_t idx = 0;
  for (int a = 0; a < k.h; ++a)
    for (int b = 0; b < k.w; ++b)
      for (int i = 0; i < k.h_out; ++i)
        for (int j = 0; j < k.w_out; ++j)
          k.kernel[idx++] = w2.at(a, i) * w1.at(b, j);
  return k;
}

Matrix apply_restored_kernel(const RestoredKernel& k, const Matrix& x) {
  if (x.rows != k.h || x.cols != k.w)
    throw shape_error("apply_restored_kernel: input dims do not match kernel");
  Matrix y(k.h_out, k.w_out);
  for (int i = 0; i < k.h_out; ++i)
    for (int j = 0; j < k.w_out; ++j) {
      float sum = 0.0f;
      for (int a = 0; a < k.h; ++a)
        for (int b = 0; b < k.w; ++b) sum += k.at(a, b, i, j) * x.at(a, b);
      y.at(i, j) = sum;
    }
  return y;
}

float bn_fold_factor(const BatchNormState& bn_in, const BatchNormState& bn_v,
                     int channel) {
  if (channel < 0 || channel >= bn_in.features || channel >= bn_v.features)
    throw usage_error("bn_fold_factor: channel out of range");
  const float s_in =
      bn_in.gamma[channel] / std::sqrt(bn_in.running_var[channel] + bn_in.epsilon);
  const float s_v =
      bn_v.gamma[channel] / std::sqrt(bn_v.running_var[channel] + bn_v.epsilon);
  return s_in * s_v;
}

void scale_kernel(RestoredKernel& k, float factor) {
  for (auto& v : k.kernel) v *= factor;
}

GrayImage render_kernel_grid(const RestoredKernel& k, int rows, int cols) {
  if (rows < 1 || cols < 1 || rows > k.h_out || cols > k.w_out)
    throw usage_error("render_kernel_grid: crop extents must be in [1, kernel extents]");
  const int i0 = (k.h_out - rows) / 2;
  const int j0 = (k.w_out - cols) / 2;

  GrayImage img;
  img.width = cols * (k.w + 1) + 1;
  img.height = rows * (k.h + 1) + 1;
  img.pixels.assign(static_cast<size_t>(img.width) * img.height, 255);

  for (int ti = 0; ti < rows; ++ti) {
    for (int tj = 0; tj < cols; ++tj) {
      const int i = i0 + ti, j = j0 + tj;
      float lo = k.at(0, 0, i, j), hi = lo;
      for (int a = 0; a < k.h; ++a)
        for (int b = 0; b < k.w; ++b) {
          const float v = k.at(a, b, i, j);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      const float range = hi - lo;
      for (int a = 0; a < k.h; ++a)
        for (int b = 0; b < k.w; ++b) {
          uint8_t px = 128;  // degenerate range maps to mid-gray
          if (range > 0.0f) {
            const float norm = (k.at(a, b, i, j) - lo) / range;
            px = static_cast<uint8_t>(std::lround(norm * 255.0f));
          }
          const int y = 1 + ti * (k.h + 1) + a;
          const int x = 1 + tj * (k.w + 1) + b;
          img.pixels[static_cast<size_t>(y) * img.width + x] = px;
        }
    }
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw io_error("write failed: " + path);
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw usage_error("write_ppm: pixel buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f << "P6\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
  if (!f) throw io_error("write failed: " + path);
}

void export_kernel_grid(const RestoredKernel& k, int rows, int cols,
                        const std::string& path) {
  write_pgm(path, render_kernel_grid(k, rows, cols));
}

}  // namespace xmlp
