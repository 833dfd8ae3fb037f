#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmlp/model.hpp"

namespace xmlp {

// Closed-form parameter and multiply-accumulate accounting for one layer,
// with comparison columns for a K x K convolution and a full spatial FC on
// the same shapes. All counts are exact integers.
struct LayerCost {
  int index = 0;
  LayerSpec spec;

  // parameters, itemized
  int64_t spatial_dense_params = 0;
  int64_t channel_dense_params = 0;
  int64_t bn_affine_params = 0;
  int64_t prelu_params = 0;

  // multiply-accumulates per sample, forward pass, dense maps only
  int64_t spatial_macs = 0;
  int64_t channel_macs = 0;

  // comparison columns
  int64_t conv_params = 0;        // K^2 * C * C'
  int64_t fc_spatial_params = 0;  // (H*W) * (H'*W')
  int64_t conv_macs = 0;          // H'*W' * C*C' * K^2
  int64_t fc_spatial_macs = 0;    // (H*W) * (H'*W') * C

  int64_t total_params() const {
    return spatial_dense_params + channel_dense_params + bn_affine_params +
           prelu_params;
  }
  int64_t total_macs() const { return spatial_macs + channel_macs; }
};

struct CostReport {
  std::vector<LayerCost> layers;
  int64_t classifier_params = 0;
  int64_t classifier_macs = 0;
  int conv_kernel = 3;

  int64_t total_params() const;
  int64_t total_macs() const;

  std::string table() const;       // aligned human-readable text
  std::string key_values() const;  // machine-readable key=value lines
};

LayerCost analytic_layer_cost(const LayerSpec& spec, int index = 0,
                              int conv_kernel = 3);
CostReport analytic_model_cost(const ModelSpec& spec, int conv_kernel = 3);

// Symmetric-case counters used by the paper's comparison claims
// (square H=W shape-preserving spatial maps, single C->C channel map).
int64_t paper_xmlp_params_square(int64_t h, int64_t c);      // 2H^2 + C^2
int64_t paper_xmlp_spatial_params_square(int64_t h);         // 2H^2
int64_t paper_fc_spatial_params_square(int64_t h);           // H^4
int64_t paper_conv_params_square(int64_t c, int64_t k);      // K^2 C^2
int64_t paper_xmlp_macs_square(int64_t h, int64_t c);        // H*W*C*(H+W+C)
int64_t paper_xmlp_channel_macs_square(int64_t h, int64_t c); // H^2 C^2
int64_t paper_conv_macs_square(int64_t h, int64_t c, int64_t k);  // H^2 C^2 K^2
int64_t paper_fc_spatial_macs_square(int64_t h, int64_t c);  // H^4 C

// ---------------------------------------------------------------------------
// Spatial-weight restoration: the composed width+height linear maps of one
// layer expressed as a single rank-4 kernel,
//   W'[a,b,i,j] = W2[a,i] * W1[b,j]
// (weights stored input-major), so Y[i,j] = sum_{a,b} W'[a,b,i,j) * X[a,b]
// reproduces width-then-height application.
// ---------------------------------------------------------------------------

struct RestoredKernel {
  int layer_index = -1;
  int h = 0, w = 0;          // input extents (rows of W2, rows of W1)
  int h_out = 0, w_out = 0;  // output extents
  std::vector<float> kernel;  // [(a*w + b)*h_out + i]*w_out + j
  DenseWeight source_w1;      // width map, w x w_out
  DenseWeight source_w2;      // height map, h x h_out

  float at(int a, int b, int i, int j) const {
    return kernel[(((static_cast<size_t>(a) * w) + b) * h_out + i) * w_out + j];
  }
};

RestoredKernel restore_spatial_weights(const DenseWeight& w1,
                                       const DenseWeight& w2,
                                       int layer_index = -1);

// Applies the restored kernel to a single-channel spatial map.
Matrix apply_restored_kernel(const RestoredKernel& k, const Matrix& x);

// Optional extension beyond the bare restoration: folds the eval-mode BN
// scales surrounding the spatial maps (per chosen channel) into the kernel
// as a scalar factor gamma_in/sqrt(var_in+eps) * gamma_v/sqrt(var_v+eps).
float bn_fold_factor(const BatchNormState& bn_in, const BatchNormState& bn_v,
                     int channel);
void scale_kernel(RestoredKernel& k, float factor);

// ---------------------------------------------------------------------------
// Kernel-grid rendering: selects the central rows x cols output positions,
// renders each position's H x W input-weight map as a tile normalized
// per-tile to the full grayscale range (constant tiles map to mid-gray 128),
// and composes a grid with 1-pixel white separators and outer border.
// Image dims: cols*(W+1)+1 by rows*(H+1)+1.
// ---------------------------------------------------------------------------

struct GrayImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;  // row-major
};

GrayImage render_kernel_grid(const RestoredKernel& k, int rows, int cols);
void export_kernel_grid(const RestoredKernel& k, int rows, int cols,
                        const std::string& path);

// Portable map writers (binary P5/P6), bit-exact for golden-file tests.
void write_pgm(const std::string& path, const GrayImage& img);
void write_ppm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb);

}  // namespace xmlp
