#pragma once

#include <string>
#include <variant>
#include <vector>

#include "xmlp/ops.hpp"

namespace xmlp {

enum class LayerVariant { basic, expansion, alternate, superior };

inline const char* variant_name(LayerVariant v) {
  switch (v) {
    case LayerVariant::basic: return "basic";
    case LayerVariant::expansion: return "expansion";
    case LayerVariant::alternate: return "alternate";
    default: return "superior";
  }
}

// Shape contract of one layer. Residuals exist only where extents already
// match; no projection shortcuts.
struct LayerSpec {
  LayerVariant variant = LayerVariant::basic;
  int c_in = 1, c_out = 1;
  int h_in = 1, h_out = 1;
  int w_in = 1, w_out = 1;
  int expansion = 4;

  bool spatial_residual() const { return h_in == h_out && w_in == w_out; }
  bool channel_residual() const { return c_in == c_out; }

  void validate() const {
    if (c_in < 1 || c_out < 1 || h_in < 1 || h_out < 1 || w_in < 1 || w_out < 1)
      throw config_error("LayerSpec extents must be >= 1");
    if (expansion < 1) throw config_error("LayerSpec expansion must be >= 1");
  }
};

enum class ParamKind { dense, bn_gamma, bn_beta, prelu_slope, bias };

inline bool weight_decay_applies(ParamKind k) {
  return k == ParamKind::dense || k == ParamKind::bias;
}

template <class T>
struct ParamRefT {
  std::string name;
  ParamKind kind;
  T* values = nullptr;
  T* grads = nullptr;
  size_t count = 0;
};

namespace detail {

template <class T>
void add_inplace(Tensor4T<T>& dst, const Tensor4T<T>& src) {
  if (!dst.same_dims(src)) throw shape_error("residual add: dims mismatch");
  for (size_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}

template <class T, class Owner>
void push_bn(std::vector<ParamRefT<T>>& out, Owner& bn, const std::string& name) {
  out.push_back({name + ".gamma", ParamKind::bn_gamma, bn.gamma.data(),
                 bn.gamma_grad.data(), bn.gamma.size()});
  out.push_back({name + ".beta", ParamKind::bn_beta, bn.beta.data(),
                 bn.beta_grad.data(), bn.beta.size()});
}

template <class T>
void push_dense(std::vector<ParamRefT<T>>& out, DenseWeightT<T>& w,
                const std::string& name) {
  out.push_back({name, ParamKind::dense, w.values.data(), w.grad.data(),
                 w.values.size()});
}

template <class T>
void push_prelu(std::vector<ParamRefT<T>>& out, PReluStateT<T>& p,
                const std::string& name) {
  out.push_back({name + ".slope", ParamKind::prelu_slope, &p.slope,
                 &p.slope_grad, 1});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Channel-cross MLP block: expand -> PReLU -> BN -> project -> PReLU -> BN,
// plus the residual when input and output channel extents match.
// ---------------------------------------------------------------------------

template <class T>
struct ChannelBlockT {
  DenseWeightT<T> expand;    // c_in x (eps * c_out)
  PReluStateT<T> act1;
  BatchNormStateT<T> bn_mid; // eps * c_out features
  DenseWeightT<T> project;   // (eps * c_out) x c_out
  PReluStateT<T> act2;
  BatchNormStateT<T> bn_out; // c_out features
  bool residual = false;

  // train-mode caches
  Tensor4T<T> cached_in, cached_t1, cached_b1, cached_t2;

  ChannelBlockT() = default;
  ChannelBlockT(int c_in, int c_out, int expansion, T bn_momentum, T bn_eps)
      : expand(c_in, expansion * c_out),
        bn_mid(expansion * c_out, bn_momentum, bn_eps),
        project(expansion * c_out, c_out),
        bn_out(c_out, bn_momentum, bn_eps),
        residual(c_in == c_out) {}

  Tensor4T<T> forward(const Tensor4T<T>& x, Mode mode) {
    auto t1 = linear_along_axis(x, expand, Axis::channel);
    auto a1 = prelu_forward(t1, act1);
    auto b1 = batchnorm_forward(a1, bn_mid, mode);
    auto t2 = linear_along_axis(b1, project, Axis::channel);
    auto a2 = prelu_forward(t2, act2);
    auto y = batchnorm_forward(a2, bn_out, mode);
    if (residual) detail::add_inplace(y, x);
    if (mode == Mode::train) {
      cached_in = x;
      cached_t1 = std::move(t1);
      cached_b1 = std::move(b1);
      cached_t2 = std::move(t2);
    }
    return y;
  }

  Tensor4T<T> backward(const Tensor4T<T>& grad_out) {
    auto g = batchnorm_backward(grad_out, bn_out);
    g = prelu_backward(g, cached_t2, act2);
    g = linear_along_axis_backward(g, cached_b1, project, Axis::channel);
    g = batchnorm_backward(g, bn_mid);
    g = prelu_backward(g, cached_t1, act1);
    g = linear_along_axis_backward(g, cached_in, expand, Axis::channel);
    if (residual) detail::add_inplace(g, grad_out);
    return g;
  }

  void zero_grad() {
    expand.zero_grad();
    project.zero_grad();
    bn_mid.zero_grad();
    bn_out.zero_grad();
    act1.zero_grad();
    act2.zero_grad();
  }

  void init(Rng& rng) {
    xavier_init(expand, rng);
    xavier_init(project, rng);
  }

  void enumerate(std::vector<ParamRefT<T>>& out, const std::string& prefix) {
    detail::push_dense(out, expand, prefix + ".expand");
    detail::push_prelu(out, act1, prefix + ".act1");
    detail::push_bn(out, bn_mid, prefix + ".bn_mid");
    detail::push_dense(out, project, prefix + ".project");
    detail::push_prelu(out, act2, prefix + ".act2");
    detail::push_bn(out, bn_out, prefix + ".bn_out");
  }

  void collect_bn(std::vector<BatchNormStateT<T>*>& out) {
    out.push_back(&bn_mid);
    out.push_back(&bn_out);
  }
};

// ---------------------------------------------------------------------------
// Spatial sections. `forward` maps the normalized input to the pre-BN height
// output V and records U (the post-width intermediate) for the superior
// variant's shortcut. `backward` accepts an optional extra gradient flowing
// directly into U.
// ---------------------------------------------------------------------------

template <class T>
struct SpatialBasicT {
  DenseWeightT<T> width;   // w_in x w_out
  DenseWeightT<T> height;  // h_in x h_out

  Tensor4T<T> cached_in, cached_u;

  SpatialBasicT() = default;
  SpatialBasicT(const LayerSpec& s)
      : width(s.w_in, s.w_out), height(s.h_in, s.h_out) {}

  Tensor4T<T> forward(const Tensor4T<T>& xn, Mode mode, Tensor4T<T>* u_out) {
    auto u = linear_along_axis(xn, width, Axis::width);
    auto v = linear_along_axis(u, height, Axis::height);
    if (u_out) *u_out = u;
    if (mode == Mode::train) {
      cached_in = xn;
      cached_u = std::move(u);
    }
    return v;
  }

  Tensor4T<T> backward(const Tensor4T<T>& grad_v, const Tensor4T<T>* grad_u_extra) {
    auto gu = linear_along_axis_backward(grad_v, cached_u, height, Axis::height);
    if (grad_u_extra) detail::add_inplace(gu, *grad_u_extra);
    return linear_along_axis_backward(gu, cached_in, width, Axis::width);
  }

  void zero_grad() {
    width.zero_grad();
    height.zero_grad();
  }
  void init(Rng& rng) {
    xavier_init(width, rng);
    xavier_init(height, rng);
  }
  void enumerate(std::vector<ParamRefT<T>>& out, const std::string& prefix) {
    detail::push_dense(out, width, prefix + ".width");
    detail::push_dense(out, height, prefix + ".height");
  }
};

// Width and height blocks of two dense layers with a PReLU between them and
// hidden extent expansion*(output extent); no BN inside the blocks.
template <class T>
struct SpatialExpansionT {
  DenseWeightT<T> width_a, width_b;
  PReluStateT<T> width_act;
  DenseWeightT<T> height_a, height_b;
  PReluStateT<T> height_act;

  Tensor4T<T> cached_in, cached_tw, cached_aw, cached_u, cached_th, cached_ah;

  SpatialExpansionT() = default;
  SpatialExpansionT(const LayerSpec& s)
      : width_a(s.w_in, s.expansion * s.w_out),
        width_b(s.expansion * s.w_out, s.w_out),
        height_a(s.h_in, s.expansion * s.h_out),
        height_b(s.expansion * s.h_out, s.h_out) {}

  Tensor4T<T> forward(const Tensor4T<T>& xn, Mode mode, Tensor4T<T>* /*u_out*/) {
    auto tw = linear_along_axis(xn, width_a, Axis::width);
    auto aw = prelu_forward(tw, width_act);
    auto u = linear_along_axis(aw, width_b, Axis::width);
    auto th = linear_along_axis(u, height_a, Axis::height);
    auto ah = prelu_forward(th, height_act);
    auto v = linear_along_axis(ah, height_b, Axis::height);
    if (mode == Mode::train) {
      cached_in = xn;
      cached_tw = std::move(tw);
      cached_aw = std::move(aw);
      cached_u = std::move(u);
      cached_th = std::move(th);
      cached_ah = std::move(ah);
    }
    return v;
  }

  Tensor4T<T> backward(const Tensor4T<T>& grad_v, const Tensor4T<T>* /*gu*/) {
    auto g = linear_along_axis_backward(grad_v, cached_ah, height_b, Axis::height);
    g = prelu_backward(g, cached_th, height_act);
    g = linear_along_axis_backward(g, cached_u, height_a, Axis::height);
    g = linear_along_axis_backward(g, cached_aw, width_b, Axis::width);
    g = prelu_backward(g, cached_tw, width_act);
    return linear_along_axis_backward(g, cached_in, width_a, Axis::width);
  }

  void zero_grad() {
    width_a.zero_grad();
    width_b.zero_grad();
    height_a.zero_grad();
    height_b.zero_grad();
    width_act.zero_grad();
    height_act.zero_grad();
  }
  void init(Rng& rng) {
    xavier_init(width_a, rng);
    xavier_init(width_b, rng);
    xavier_init(height_a, rng);
    xavier_init(height_b, rng);
  }
  void enumerate(std::vector<ParamRefT<T>>& out, const std::string& prefix) {
    detail::push_dense(out, width_a, prefix + ".width_a");
    detail::push_prelu(out, width_act, prefix + ".width_act");
    detail::push_dense(out, width_b, prefix + ".width_b");
    detail::push_dense(out, height_a, prefix + ".height_a");
    detail::push_prelu(out, height_act, prefix + ".height_act");
    detail::push_dense(out, height_b, prefix + ".height_b");
  }
};

// The four dense layers of the expansion blocks interleaved
// width/height/width/height, every one followed by its own PReLU.
template <class T>
struct SpatialAlternateT {
  DenseWeightT<T> w_first, h_first, w_second, h_second;
  PReluStateT<T> act1, act2, act3, act4;

  Tensor4T<T> cached_in, cached_t1, cached_a1, cached_t2, cached_a2, cached_t3,
      cached_a3, cached_t4;

  SpatialAlternateT() = default;
  SpatialAlternateT(const LayerSpec& s)
      : w_first(s.w_in, s.expansion * s.w_out),
        h_first(s.h_in, s.expansion * s.h_out),
        w_second(s.expansion * s.w_out, s.w_out),
        h_second(s.expansion * s.h_out, s.h_out) {}

  Tensor4T<T> forward(const Tensor4T<T>& xn, Mode mode, Tensor4T<T>* /*u_out*/) {
    auto t1 = linear_along_axis(xn, w_first, Axis::width);
    auto a1 = prelu_forward(t1, act1);
    auto t2 = linear_along_axis(a1, h_first, Axis::height);
    auto a2 = prelu_forward(t2, act2);
    auto t3 = linear_along_axis(a2, w_second, Axis::width);
    auto a3 = prelu_forward(t3, act3);
    auto t4 = linear_along_axis(a3, h_second, Axis::height);
    auto v = prelu_forward(t4, act4);
    if (mode == Mode::train) {
      cached_in = xn;
      cached_t1 = std::move(t1);
      cached_a1 = std::move(a1);
      cached_t2 = std::move(t2);
      cached_a2 = std::move(a2);
      cached_t3 = std::move(t3);
      cached_a3 = std::move(a3);
      cached_t4 = std::move(t4);
    }
    return v;
  }

  Tensor4T<T> backward(const Tensor4T<T>& grad_v, const Tensor4T<T>* /*gu*/) {
    auto g = prelu_backward(grad_v, cached_t4, act4);
    g = linear_along_axis_backward(g, cached_a3, h_second, Axis::height);
    g = prelu_backward(g, cached_t3, act3);
    g = linear_along_axis_backward(g, cached_a2, w_second, Axis::width);
    g = prelu_backward(g, cached_t2, act2);
    g = linear_along_axis_backward(g, cached_a1, h_first, Axis::height);
    g = prelu_backward(g, cached_t1, act1);
    return linear_along_axis_backward(g, cached_in, w_first, Axis::width);
  }

  void zero_grad() {
    w_first.zero_grad();
    h_first.zero_grad();
    w_second.zero_grad();
    h_second.zero_grad();
    act1.zero_grad();
    act2.zero_grad();
    act3.zero_grad();
    act4.zero_grad();
  }
  void init(Rng& rng) {
    xavier_init(w_first, rng);
    xavier_init(h_first, rng);
    xavier_init(w_second, rng);
    xavier_init(h_second, rng);
  }
  void enumerate(std::vector<ParamRefT<T>>& out, const std::string& prefix) {
    detail::push_dense(out, w_first, prefix + ".w_first");
    detail::push_prelu(out, act1, prefix + ".act1");
    detail::push_dense(out, h_first, prefix + ".h_first");
    detail::push_prelu(out, act2, prefix + ".act2");
    detail::push_dense(out, w_second, prefix + ".w_second");
    detail::push_prelu(out, act3, prefix + ".act3");
    detail::push_dense(out, h_second, prefix + ".h_second");
    detail::push_prelu(out, act4, prefix + ".act4");
  }
};

// ---------------------------------------------------------------------------
// One X-MLP layer:
//
//   Xn  = BN(x)
//   V   = spatial section (variant-specific width/height maps) applied to Xn
//   mix = BN(V) [+ Xn when spatial extents match]
//         [superior: + V, + U when the height extent is unchanged]
//   O   = BN(mix)
//   Y   = channel block(O)   [superior: followed by a second channel block]
// ---------------------------------------------------------------------------

template <class T>
struct LayerT {
  LayerSpec spec;
  BatchNormStateT<T> bn_in;  // c_in
  std::variant<SpatialBasicT<T>, SpatialExpansionT<T>, SpatialAlternateT<T>> spatial;
  BatchNormStateT<T> bn_v;   // c_in
  BatchNormStateT<T> bn_o;   // c_in
  ChannelBlockT<T> channel;              // c_in -> c_out
  ChannelBlockT<T> channel2;             // superior only: c_out -> c_out
  bool has_cache = false;

  LayerT() = default;
  LayerT(const LayerSpec& s, T bn_momentum = T(0.1), T bn_eps = T(1e-5))
      : spec((s.validate(), s)),
        bn_in(s.c_in, bn_momentum, bn_eps),
        bn_v(s.c_in, bn_momentum, bn_eps),
        bn_o(s.c_in, bn_momentum, bn_eps),
        channel(s.c_in, s.c_out, s.expansion, bn_momentum, bn_eps) {
    switch (s.variant) {
      case LayerVariant::basic:
      case LayerVariant::superior:
        spatial = SpatialBasicT<T>(s);
        break;
      case LayerVariant::expansion:
        spatial = SpatialExpansionT<T>(s);
        break;
      case LayerVariant::alternate:
        spatial = SpatialAlternateT<T>(s);
        break;
    }
    if (s.variant == LayerVariant::superior)
      channel2 = ChannelBlockT<T>(s.c_out, s.c_out, s.expansion, bn_momentum, bn_eps);
  }

  bool is_superior() const { return spec.variant == LayerVariant::superior; }
  bool u_shortcut() const { return is_superior() && spec.h_in == spec.h_out; }

  Tensor4T<T> forward(const Tensor4T<T>& x, Mode mode) {
    if (x.c != spec.c_in || x.h != spec.h_in || x.w != spec.w_in)
      throw shape_error("layer forward: input dims (" + std::to_string(x.c) +
                        "," + std::to_string(x.h) + "," + std::to_string(x.w) +
                        ") do not match spec (" + std::to_string(spec.c_in) +
                        "," + std::to_string(spec.h_in) + "," +
                        std::to_string(spec.w_in) + ")");
    auto xn = batchnorm_forward(x, bn_in, mode);
    Tensor4T<T> u;
    auto v = std::visit(
        [&](auto& sp) { return sp.forward(xn, mode, is_superior() ? &u : nullptr); },
        spatial);
    auto mix = batchnorm_forward(v, bn_v, mode);
    if (spec.spatial_residual()) detail::add_inplace(mix, xn);
    if (is_superior()) {
      detail::add_inplace(mix, v);
      if (u_shortcut()) detail::add_inplace(mix, u);
    }
    auto o = batchnorm_forward(mix, bn_o, mode);
    auto y = channel.forward(o, mode);
    if (is_superior()) y = channel2.forward(y, mode);
    has_cache = (mode == Mode::train);
    return y;
  }

  Tensor4T<T> backward(const Tensor4T<T>& grad_out) {
    if (!has_cache)
      throw usage_error("layer backward called without a train-mode forward");
    Tensor4T<T> g = grad_out;
    if (is_superior()) g = channel2.backward(g);
    auto grad_o = channel.backward(g);
    auto grad_mix = batchnorm_backward(grad_o, bn_o);
    auto grad_v = batchnorm_backward(grad_mix, bn_v);
    const Tensor4T<T>* gu_extra = nullptr;
    if (is_superior()) {
      detail::add_inplace(grad_v, grad_mix);  // direct V shortcut
      if (u_shortcut()) gu_extra = &grad_mix;
    }
    auto grad_xn = std::visit([&](auto& sp) { return sp.backward(grad_v, gu_extra); },
                              spatial);
    if (spec.spatial_residual()) detail::add_inplace(grad_xn, grad_mix);
    return batchnorm_backward(grad_xn, bn_in);
  }

  void zero_grad() {
    bn_in.zero_grad();
    bn_v.zero_grad();
    bn_o.zero_grad();
    std::visit([](auto& sp) { sp.zero_grad(); }, spatial);
    channel.zero_grad();
    if (is_superior()) channel2.zero_grad();
  }

  void init(Rng& rng) {
    std::visit([&](auto& sp) { sp.init(rng); }, spatial);
    channel.init(rng);
    if (is_superior()) channel2.init(rng);
  }

  // Deterministic wiring-order enumeration; every learnable scalar appears
  // exactly once.
  void enumerate(std::vector<ParamRefT<T>>& out, const std::string& prefix) {
    detail::push_bn(out, bn_in, prefix + ".bn_in");
    std::visit([&](auto& sp) { sp.enumerate(out, prefix + ".spatial"); }, spatial);
    detail::push_bn(out, bn_v, prefix + ".bn_v");
    detail::push_bn(out, bn_o, prefix + ".bn_o");
    channel.enumerate(out, prefix + ".channel");
    if (is_superior()) channel2.enumerate(out, prefix + ".channel2");
  }

  size_t param_count() {
    std::vector<ParamRefT<T>> refs;
    enumerate(refs, "l");
    size_t total = 0;
    for (const auto& r : refs) total += r.count;
    return total;
  }

  // Running-stat carriers in wiring order (for checkpointing).
  void collect_bn(std::vector<BatchNormStateT<T>*>& out) {
    out.push_back(&bn_in);
    out.push_back(&bn_v);
    out.push_back(&bn_o);
    channel.collect_bn(out);
    if (is_superior()) channel2.collect_bn(out);
  }
};

using Layer = LayerT<float>;
using ParamRef = ParamRefT<float>;

}  // namespace xmlp
