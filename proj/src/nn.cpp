#include "rndood/nn.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace rndood {

LayerDesc LayerDesc::conv(int in_c, int out_c, int kernel, int stride, int pad) {
  LayerDesc d;
  d.kind = LayerKind::Conv;
  d.in_channels = in_c;
  d.out_channels = out_c;
  d.kernel = kernel;
  d.stride = stride;
  d.pad = pad;
  return d;
}

LayerDesc LayerDesc::activation(Activation a, double slope) {
  LayerDesc d;
  d.kind = LayerKind::Act;
  d.act = a;
  d.slope = slope;
  return d;
}

LayerDesc LayerDesc::dense(int in_dim, int out_dim) {
  LayerDesc d;
  d.kind = LayerKind::Dense;
  d.in_dim = in_dim;
  d.out_dim = out_dim;
  return d;
}

LayerDesc LayerDesc::flatten() {
  LayerDesc d;
  d.kind = LayerKind::Flatten;
  return d;
}

LayerDesc LayerDesc::global_avg_pool() {
  LayerDesc d;
  d.kind = LayerKind::GlobalAvgPool;
  return d;
}

LayerDesc LayerDesc::residual(int in_dim, int out_dim, bool final_act) {
  LayerDesc d;
  d.kind = LayerKind::Residual;
  d.in_dim = in_dim;
  d.out_dim = out_dim;
  d.final_act = final_act;
  return d;
}

LayerDesc LayerDesc::conv_residual(int in_c, int out_c, int stride,
                                   bool final_act) {
  LayerDesc d;
  d.kind = LayerKind::ConvResidual;
  d.in_channels = in_c;
  d.out_channels = out_c;
  d.kernel = 3;
  d.stride = stride;
  d.pad = 1;
  d.final_act = final_act;
  return d;
}

namespace {

bool conv_res_has_projection(const LayerDesc& d) {
  return d.in_channels != d.out_channels || d.stride != 1;
}

bool residual_has_projection(const LayerDesc& d) {
  return d.in_dim != d.out_dim;
}

int conv_out_extent(int n, int kernel, int stride, int pad) {
  return (n + 2 * pad - kernel) / stride + 1;
}

TensorShape apply_layer_shape(const TensorShape& s, const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::Conv: {
      if (d.kernel < 1 || d.stride < 1 || d.pad < 0 || d.out_channels < 1)
        throw std::invalid_argument("profile: malformed conv layer");
      if (s.channels != d.in_channels)
        throw std::invalid_argument("profile: conv input channels mismatch");
      const int h = conv_out_extent(s.height, d.kernel, d.stride, d.pad);
      const int w = conv_out_extent(s.width, d.kernel, d.stride, d.pad);
      if (h < 1 || w < 1)
        throw std::invalid_argument("profile: conv collapses spatial extent");
      return {d.out_channels, h, w};
    }
    case LayerKind::ConvResidual: {
      if (d.stride < 1 || d.out_channels < 1)
        throw std::invalid_argument("profile: malformed residual conv block");
      if (s.channels != d.in_channels)
        throw std::invalid_argument("profile: residual block channel mismatch");
      const int h = conv_out_extent(s.height, 3, d.stride, 1);
      const int w = conv_out_extent(s.width, 3, d.stride, 1);
      if (h < 1 || w < 1)
        throw std::invalid_argument("profile: residual block collapses extent");
      return {d.out_channels, h, w};
    }
    case LayerKind::Act:
      return s;
    case LayerKind::Flatten:
      return {s.flat(), 1, 1};
    case LayerKind::GlobalAvgPool:
      return {s.channels, 1, 1};
    case LayerKind::Dense:
      if (s.height != 1 || s.width != 1 || s.channels != d.in_dim)
        throw std::invalid_argument("profile: dense input dim mismatch");
      if (d.out_dim < 1)
        throw std::invalid_argument("profile: malformed dense layer");
      return {d.out_dim, 1, 1};
    case LayerKind::Residual:
      if (s.height != 1 || s.width != 1 || s.channels != d.in_dim)
        throw std::invalid_argument("profile: residual input dim mismatch");
      if (d.out_dim < 1)
        throw std::invalid_argument("profile: malformed residual layer");
      return {d.out_dim, 1, 1};
  }
  throw std::invalid_argument("profile: unknown layer kind");
}

Eigen::Index layer_param_count(const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::Conv:
      return static_cast<Eigen::Index>(d.out_channels) * d.in_channels *
                 d.kernel * d.kernel +
             d.out_channels;
    case LayerKind::Dense:
      return static_cast<Eigen::Index>(d.out_dim) * d.in_dim + d.out_dim;
    case LayerKind::Residual: {
      Eigen::Index n = static_cast<Eigen::Index>(d.out_dim) * d.in_dim + d.out_dim;
      n += static_cast<Eigen::Index>(d.out_dim) * d.out_dim + d.out_dim;
      if (residual_has_projection(d))
        n += static_cast<Eigen::Index>(d.out_dim) * d.in_dim;
      return n;
    }
    case LayerKind::ConvResidual: {
      Eigen::Index n =
          static_cast<Eigen::Index>(d.out_channels) * d.in_channels * 9 +
          d.out_channels;
      n += static_cast<Eigen::Index>(d.out_channels) * d.out_channels * 9 +
           d.out_channels;
      if (conv_res_has_projection(d))
        n += static_cast<Eigen::Index>(d.out_channels) * d.in_channels;
      return n;
    }
    default:
      return 0;
  }
}

}  // namespace

std::vector<TensorShape> infer_shapes(const NetworkProfile& profile) {
  if (profile.input.channels < 1 || profile.input.height < 1 ||
      profile.input.width < 1)
    throw std::invalid_argument("profile: non-positive input shape");
  if (profile.layers.empty())
    throw std::invalid_argument("profile: no layers");
  std::vector<TensorShape> shapes;
  shapes.reserve(profile.layers.size() + 1);
  shapes.push_back(profile.input);
  for (const LayerDesc& d : profile.layers)
    shapes.push_back(apply_layer_shape(shapes.back(), d));
  return shapes;
}

int output_dim(const NetworkProfile& profile) {
  const TensorShape out = infer_shapes(profile).back();
  if (out.height != 1 || out.width != 1)
    throw std::invalid_argument("profile: output is not a feature vector");
  return out.channels;
}

Eigen::Index parameter_count(const NetworkProfile& profile) {
  infer_shapes(profile);  // validates composition
  Eigen::Index n = 0;
  for (const LayerDesc& d : profile.layers) n += layer_param_count(d);
  return n;
}

namespace {

void append_trunk(NetworkProfile& p, TensorShape input) {
  int h = input.height, w = input.width;
  p.layers.push_back(LayerDesc::conv(input.channels, 32, 3, 2, 1));
  p.layers.push_back(LayerDesc::activation(Activation::LeakyRelu));
  p.layers.push_back(LayerDesc::conv(32, 64, 3, 2, 1));
  p.layers.push_back(LayerDesc::activation(Activation::LeakyRelu));
  p.layers.push_back(LayerDesc::conv(64, 64, 3, 2, 1));
  p.layers.push_back(LayerDesc::activation(Activation::LeakyRelu));
  for (int i = 0; i < 3; ++i) {
    h = conv_out_extent(h, 3, 2, 1);
    w = conv_out_extent(w, 3, 2, 1);
  }
  p.layers.push_back(LayerDesc::flatten());
  p.layers.push_back(LayerDesc::dense(64 * h * w, 128));
}

}  // namespace

NetworkProfile tiny_target_profile(TensorShape input) {
  NetworkProfile p;
  p.name = "tiny";
  p.input = input;
  append_trunk(p, input);
  return p;
}

NetworkProfile tiny_predictor_profile(TensorShape input) {
  NetworkProfile p = tiny_target_profile(input);
  p.layers.push_back(LayerDesc::dense(128, 256));
  p.layers.push_back(LayerDesc::activation(Activation::Relu));
  p.layers.push_back(LayerDesc::dense(256, 128));
  return p;
}

NetworkProfile paper_target_profile(TensorShape input) {
  NetworkProfile p;
  p.name = "paper";
  p.input = input;
  p.layers.push_back(LayerDesc::conv(input.channels, 64, 3, 1, 1));
  p.layers.push_back(LayerDesc::activation(Activation::Relu));
  const int stage_blocks[4] = {3, 4, 6, 3};
  const int stage_width[4] = {64, 128, 256, 512};
  int width = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < stage_blocks[s]; ++b) {
      const int in_w = b == 0 ? width : stage_width[s];
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      const bool last = s == 3 && b == stage_blocks[s] - 1;
      p.layers.push_back(
          LayerDesc::conv_residual(in_w, stage_width[s], stride, !last));
    }
    width = stage_width[s];
  }
  p.layers.push_back(LayerDesc::global_avg_pool());
  return p;
}

NetworkProfile paper_predictor_profile(TensorShape input) {
  NetworkProfile p = paper_target_profile(input);
  p.layers.push_back(LayerDesc::residual(512, 1024, true));
  p.layers.push_back(LayerDesc::residual(1024, 512, false));
  return p;
}

NetworkProfile profile_by_name(const std::string& name, TensorShape input,
                               bool predictor) {
  if (name == "tiny")
    return predictor ? tiny_predictor_profile(input) : tiny_target_profile(input);
  if (name == "paper")
    return predictor ? paper_predictor_profile(input) : paper_target_profile(input);
  throw std::invalid_argument("unknown network profile: " + name);
}

namespace {

// Fills `n` weights from the stream; biases are zeroed separately.
void draw_gaussian(Eigen::VectorXd& params, Eigen::Index offset, Eigen::Index n,
                   int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index i = 0; i < n; ++i) params(offset + i) = gauss(rng);
}

}  // namespace

Network init_network(const NetworkProfile& profile, std::uint64_t seed,
                     bool frozen) {
  Network net;
  net.profile = profile;
  net.params = Eigen::VectorXd::Zero(parameter_count(profile));
  net.frozen = frozen;

  std::mt19937_64 rng(seed);
  Eigen::Index off = 0;
  for (const LayerDesc& d : profile.layers) {
    switch (d.kind) {
      case LayerKind::Conv: {
        const Eigen::Index nw =
            static_cast<Eigen::Index>(d.out_channels) * d.in_channels *
            d.kernel * d.kernel;
        draw_gaussian(net.params, off, nw, d.in_channels * d.kernel * d.kernel,
                      rng);
        break;
      }
      case LayerKind::Dense: {
        const Eigen::Index nw = static_cast<Eigen::Index>(d.out_dim) * d.in_dim;
        draw_gaussian(net.params, off, nw, d.in_dim, rng);
        break;
      }
      case LayerKind::Residual: {
        Eigen::Index o = off;
        const Eigen::Index n1 = static_cast<Eigen::Index>(d.out_dim) * d.in_dim;
        draw_gaussian(net.params, o, n1, d.in_dim, rng);
        o += n1 + d.out_dim;  // skip b1
        const Eigen::Index n2 = static_cast<Eigen::Index>(d.out_dim) * d.out_dim;
        draw_gaussian(net.params, o, n2, d.out_dim, rng);
        o += n2 + d.out_dim;  // skip b2
        if (residual_has_projection(d))
          draw_gaussian(net.params, o, n1, d.in_dim, rng);
        break;
      }
      case LayerKind::ConvResidual: {
        Eigen::Index o = off;
        const Eigen::Index n1 =
            static_cast<Eigen::Index>(d.out_channels) * d.in_channels * 9;
        draw_gaussian(net.params, o, n1, d.in_channels * 9, rng);
        o += n1 + d.out_channels;
        const Eigen::Index n2 =
            static_cast<Eigen::Index>(d.out_channels) * d.out_channels * 9;
        draw_gaussian(net.params, o, n2, d.out_channels * 9, rng);
        o += n2 + d.out_channels;
        if (conv_res_has_projection(d))
          draw_gaussian(net.params, o,
                        static_cast<Eigen::Index>(d.out_channels) * d.in_channels,
                        d.in_channels, rng);
        break;
      }
      default:
        break;
    }
    off += layer_param_count(d);
  }
  return net;
}

namespace {

struct ConvGeom {
  int in_c, out_c, kernel, stride, pad;
  int h_in, w_in, h_out, w_out;
  int hw_out() const { return h_out * w_out; }
};

ConvGeom make_geom(const TensorShape& in, int out_c, int kernel, int stride,
                   int pad) {
  ConvGeom g;
  g.in_c = in.channels;
  g.out_c = out_c;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = pad;
  g.h_in = in.height;
  g.w_in = in.width;
  g.h_out = conv_out_extent(in.height, kernel, stride, pad);
  g.w_out = conv_out_extent(in.width, kernel, stride, pad);
  return g;
}

// Patch matrix: row = c*k*k + dy*k + dx, column = b*hw_out + y*w_out + x.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, const ConvGeom& g) {
  const auto batch = static_cast<int>(x.cols());
  const int kk = g.kernel * g.kernel;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(g.in_c) * kk,
                       static_cast<Eigen::Index>(g.hw_out()) * batch);
  for (int b = 0; b < batch; ++b) {
    const double* xb = x.data() + static_cast<Eigen::Index>(b) * x.rows();
    for (int y = 0; y < g.h_out; ++y)
      for (int xo = 0; xo < g.w_out; ++xo) {
        const Eigen::Index col =
            static_cast<Eigen::Index>(b) * g.hw_out() + y * g.w_out + xo;
        double* dst = cols.data() + col * cols.rows();
        for (int c = 0; c < g.in_c; ++c)
          for (int dy = 0; dy < g.kernel; ++dy) {
            const int yy = y * g.stride + dy - g.pad;
            for (int dx = 0; dx < g.kernel; ++dx) {
              const int xx = xo * g.stride + dx - g.pad;
              dst[c * kk + dy * g.kernel + dx] =
                  (yy >= 0 && yy < g.h_in && xx >= 0 && xx < g.w_in)
                      ? xb[static_cast<Eigen::Index>(c) * g.h_in * g.w_in +
                           static_cast<Eigen::Index>(yy) * g.w_in + xx]
                      : 0.0;
            }
          }
      }
  }
  return cols;
}

// Scatter-add transpose of im2col.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& dcols, const ConvGeom& g,
                       int batch) {
  const int kk = g.kernel * g.kernel;
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(g.in_c) * g.h_in * g.w_in, batch);
  for (int b = 0; b < batch; ++b) {
    double* xb = dx.data() + static_cast<Eigen::Index>(b) * dx.rows();
    for (int y = 0; y < g.h_out; ++y)
      for (int xo = 0; xo < g.w_out; ++xo) {
        const Eigen::Index col =
            static_cast<Eigen::Index>(b) * g.hw_out() + y * g.w_out + xo;
        const double* src = dcols.data() + col * dcols.rows();
        for (int c = 0; c < g.in_c; ++c)
          for (int dy = 0; dy < g.kernel; ++dy) {
            const int yy = y * g.stride + dy - g.pad;
            if (yy < 0 || yy >= g.h_in) continue;
            for (int dx_ = 0; dx_ < g.kernel; ++dx_) {
              const int xx = xo * g.stride + dx_ - g.pad;
              if (xx < 0 || xx >= g.w_in) continue;
              xb[static_cast<Eigen::Index>(c) * g.h_in * g.w_in +
                 static_cast<Eigen::Index>(yy) * g.w_in + xx] +=
                  src[c * kk + dy * g.kernel + dx_];
            }
          }
      }
  }
  return dx;
}

// (out_c x hw_out*batch) grouped by sample -> one column per sample.
Eigen::MatrixXd pack_blob(const Eigen::MatrixXd& y, const ConvGeom& g,
                          int batch) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(g.out_c) * g.hw_out(), batch);
  for (int b = 0; b < batch; ++b)
    out.col(b).reshaped(g.hw_out(), g.out_c) =
        y.middleCols(static_cast<Eigen::Index>(b) * g.hw_out(), g.hw_out())
            .transpose();
  return out;
}

Eigen::MatrixXd unpack_blob(const Eigen::MatrixXd& blob, const ConvGeom& g,
                            int batch) {
  Eigen::MatrixXd y(g.out_c, static_cast<Eigen::Index>(g.hw_out()) * batch);
  for (int b = 0; b < batch; ++b)
    y.middleCols(static_cast<Eigen::Index>(b) * g.hw_out(), g.hw_out()) =
        blob.col(b).reshaped(g.hw_out(), g.out_c).transpose();
  return y;
}

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& x, const LayerDesc& d) {
  switch (d.act) {
    case Activation::Relu:
      return x.cwiseMax(0.0);
    case Activation::LeakyRelu:
      return x.cwiseMax(0.0) + d.slope * x.cwiseMin(0.0);
    case Activation::None:
      return x;
  }
  return x;
}

Eigen::MatrixXd activation_backward(const Eigen::MatrixXd& dy,
                                    const Eigen::MatrixXd& x_in,
                                    Activation act, double slope) {
  switch (act) {
    case Activation::Relu:
      return (dy.array() * (x_in.array() > 0.0).cast<double>()).matrix();
    case Activation::LeakyRelu:
      return (dy.array() *
              ((x_in.array() > 0.0).cast<double>() * (1.0 - slope) + slope))
          .matrix();
    case Activation::None:
      return dy;
  }
  return dy;
}

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using MutMap = Eigen::Map<Eigen::MatrixXd>;
using MutVecMap = Eigen::Map<Eigen::VectorXd>;

/// Everything backward needs from the forward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> acts;    // acts[i] = input of layer i
  std::vector<Eigen::MatrixXd> cols1;   // conv patches (first conv of a block)
  std::vector<Eigen::MatrixXd> cols2;   // second conv of a residual block
  std::vector<Eigen::MatrixXd> cols3;   // projection conv
  std::vector<Eigen::MatrixXd> hidden;  // residual mid activation
};

Eigen::MatrixXd run_forward(const Network& net, const Eigen::MatrixXd& x0,
                            const std::vector<TensorShape>& shapes,
                            ForwardTrace* trace) {
  const auto batch = static_cast<int>(x0.cols());
  const std::size_t n_layers = net.profile.layers.size();
  if (trace) {
    trace->acts.resize(n_layers + 1);
    trace->cols1.resize(n_layers);
    trace->cols2.resize(n_layers);
    trace->cols3.resize(n_layers);
    trace->hidden.resize(n_layers);
    trace->acts[0] = x0;
  }

  Eigen::MatrixXd x = x0;
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const LayerDesc& d = net.profile.layers[i];
    const TensorShape& in_shape = shapes[i];
    switch (d.kind) {
      case LayerKind::Conv: {
        const ConvGeom g = make_geom(in_shape, d.out_channels, d.kernel,
                                     d.stride, d.pad);
        ConstMap w(net.params.data() + off, g.out_c,
                   static_cast<Eigen::Index>(g.in_c) * g.kernel * g.kernel);
        ConstVecMap bias(net.params.data() + off + w.size(), g.out_c);
        Eigen::MatrixXd cols = im2col(x, g);
        Eigen::MatrixXd y = w * cols;
        y.colwise() += bias;
        x = pack_blob(y, g, batch);
        if (trace) trace->cols1[i] = std::move(cols);
        break;
      }
      case LayerKind::Act:
        x = apply_activation(x, d);
        break;
      case LayerKind::Flatten:
        break;  // layout is already flat
      case LayerKind::GlobalAvgPool: {
        const int hw = in_shape.height * in_shape.width;
        Eigen::MatrixXd y(in_shape.channels, batch);
        for (int b = 0; b < batch; ++b)
          y.col(b) =
              x.col(b).reshaped(hw, in_shape.channels).colwise().mean().transpose();
        x = std::move(y);
        break;
      }
      case LayerKind::Dense: {
        ConstMap w(net.params.data() + off, d.out_dim, d.in_dim);
        ConstVecMap bias(net.params.data() + off + w.size(), d.out_dim);
        Eigen::MatrixXd y = w * x;
        y.colwise() += bias;
        x = std::move(y);
        break;
      }
      case LayerKind::Residual: {
        Eigen::Index o = off;
        ConstMap w1(net.params.data() + o, d.out_dim, d.in_dim);
        o += w1.size();
        ConstVecMap b1(net.params.data() + o, d.out_dim);
        o += d.out_dim;
        ConstMap w2(net.params.data() + o, d.out_dim, d.out_dim);
        o += w2.size();
        ConstVecMap b2(net.params.data() + o, d.out_dim);
        o += d.out_dim;
        Eigen::MatrixXd h = w1 * x;
        h.colwise() += b1;
        h = h.cwiseMax(0.0);
        Eigen::MatrixXd y = w2 * h;
        y.colwise() += b2;
        if (residual_has_projection(d)) {
          ConstMap proj(net.params.data() + o, d.out_dim, d.in_dim);
          y.noalias() += proj * x;
        } else {
          y += x;
        }
        if (d.final_act) y = y.cwiseMax(0.0);
        if (trace) trace->hidden[i] = std::move(h);
        x = std::move(y);
        break;
      }
      case LayerKind::ConvResidual: {
        const ConvGeom g1 = make_geom(in_shape, d.out_channels, 3, d.stride, 1);
        const TensorShape mid{d.out_channels, g1.h_out, g1.w_out};
        const ConvGeom g2 = make_geom(mid, d.out_channels, 3, 1, 1);
        Eigen::Index o = off;
        ConstMap w1(net.params.data() + o, g1.out_c,
                    static_cast<Eigen::Index>(g1.in_c) * 9);
        o += w1.size();
        ConstVecMap b1(net.params.data() + o, g1.out_c);
        o += g1.out_c;
        ConstMap w2(net.params.data() + o, g2.out_c,
                    static_cast<Eigen::Index>(g2.in_c) * 9);
        o += w2.size();
        ConstVecMap b2(net.params.data() + o, g2.out_c);
        o += g2.out_c;

        Eigen::MatrixXd cols1 = im2col(x, g1);
        Eigen::MatrixXd u = w1 * cols1;
        u.colwise() += b1;
        Eigen::MatrixXd h = pack_blob(u, g1, batch).cwiseMax(0.0);

        Eigen::MatrixXd cols2 = im2col(h, g2);
        Eigen::MatrixXd v = w2 * cols2;
        v.colwise() += b2;
        Eigen::MatrixXd y = pack_blob(v, g2, batch);

        if (conv_res_has_projection(d)) {
          const ConvGeom gp = make_geom(in_shape, d.out_channels, 1, d.stride, 0);
          ConstMap wp(net.params.data() + o, gp.out_c, gp.in_c);
          Eigen::MatrixXd cols3 = im2col(x, gp);
          y += pack_blob(wp * cols3, gp, batch);
          if (trace) trace->cols3[i] = std::move(cols3);
        } else {
          y += x;
        }
        if (d.final_act) y = y.cwiseMax(0.0);
        if (trace) {
          trace->cols1[i] = std::move(cols1);
          trace->cols2[i] = std::move(cols2);
          trace->hidden[i] = std::move(h);
        }
        x = std::move(y);
        break;
      }
    }
    off += layer_param_count(d);
    if (trace) trace->acts[i + 1] = x;
  }
  return x;
}

Eigen::MatrixXd batch_matrix(const Network& net,
                             const std::vector<Image>& batch) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const TensorShape& in = net.profile.input;
  Eigen::MatrixXd x0(in.flat(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Image& img = batch[b];
    if (img.channels != in.channels || img.height != in.height ||
        img.width != in.width)
      throw std::invalid_argument("forward: image shape does not match profile");
    x0.col(static_cast<Eigen::Index>(b)) = img.data;
  }
  if (!x0.allFinite())
    throw std::invalid_argument("forward: non-finite values in input batch");
  return x0;
}

/// Per-layer parameter offsets, layers.size()+1 entries (last = total).
std::vector<Eigen::Index> param_offsets(const NetworkProfile& profile) {
  std::vector<Eigen::Index> off(profile.layers.size() + 1, 0);
  for (std::size_t i = 0; i < profile.layers.size(); ++i)
    off[i + 1] = off[i] + layer_param_count(profile.layers[i]);
  return off;
}

void run_backward(const Network& net, const std::vector<TensorShape>& shapes,
                  const ForwardTrace& trace, Eigen::MatrixXd dx,
                  Eigen::VectorXd& grad) {
  const auto batch = static_cast<int>(dx.cols());
  const std::vector<Eigen::Index> offs = param_offsets(net.profile);
  for (int i = static_cast<int>(net.profile.layers.size()) - 1; i >= 0; --i) {
    const LayerDesc& d = net.profile.layers[static_cast<std::size_t>(i)];
    const TensorShape& in_shape = shapes[static_cast<std::size_t>(i)];
    const Eigen::Index off = offs[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd& x_in = trace.acts[static_cast<std::size_t>(i)];
    switch (d.kind) {
      case LayerKind::Conv: {
        const ConvGeom g = make_geom(in_shape, d.out_channels, d.kernel,
                                     d.stride, d.pad);
        ConstMap w(net.params.data() + off, g.out_c,
                   static_cast<Eigen::Index>(g.in_c) * g.kernel * g.kernel);
        MutMap gw(grad.data() + off, w.rows(), w.cols());
        MutVecMap gb(grad.data() + off + w.size(), g.out_c);
        const Eigen::MatrixXd dy = unpack_blob(dx, g, batch);
        gw.noalias() = dy * trace.cols1[static_cast<std::size_t>(i)].transpose();
        gb = dy.rowwise().sum();
        dx = col2im(w.transpose() * dy, g, batch);
        break;
      }
      case LayerKind::Act:
        dx = activation_backward(dx, x_in, d.act, d.slope);
        break;
      case LayerKind::Flatten:
        break;
      case LayerKind::GlobalAvgPool: {
        const int hw = in_shape.height * in_shape.width;
        Eigen::MatrixXd prev(static_cast<Eigen::Index>(in_shape.channels) * hw,
                             batch);
        for (int b = 0; b < batch; ++b)
          prev.col(b).reshaped(hw, in_shape.channels) =
              (dx.col(b).transpose() / hw).replicate(hw, 1);
        dx = std::move(prev);
        break;
      }
      case LayerKind::Dense: {
        ConstMap w(net.params.data() + off, d.out_dim, d.in_dim);
        MutMap gw(grad.data() + off, d.out_dim, d.in_dim);
        MutVecMap gb(grad.data() + off + w.size(), d.out_dim);
        gw.noalias() = dx * x_in.transpose();
        gb = dx.rowwise().sum();
        dx = w.transpose() * dx;
        break;
      }
      case LayerKind::Residual: {
        Eigen::Index o = off;
        ConstMap w1(net.params.data() + o, d.out_dim, d.in_dim);
        MutMap gw1(grad.data() + o, d.out_dim, d.in_dim);
        o += w1.size();
        MutVecMap gb1(grad.data() + o, d.out_dim);
        o += d.out_dim;
        ConstMap w2(net.params.data() + o, d.out_dim, d.out_dim);
        MutMap gw2(grad.data() + o, d.out_dim, d.out_dim);
        o += w2.size();
        MutVecMap gb2(grad.data() + o, d.out_dim);
        o += d.out_dim;

        const Eigen::MatrixXd& h = trace.hidden[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd& y = trace.acts[static_cast<std::size_t>(i) + 1];
        Eigen::MatrixXd dv;
        if (d.final_act)
          dv = (dx.array() * (y.array() > 0.0).cast<double>()).matrix();
        else
          dv = std::move(dx);
        gw2.noalias() = dv * h.transpose();
        gb2 = dv.rowwise().sum();
        Eigen::MatrixXd dh = w2.transpose() * dv;
        dh.array() *= (h.array() > 0.0).cast<double>();
        gw1.noalias() = dh * x_in.transpose();
        gb1 = dh.rowwise().sum();
        dx = w1.transpose() * dh;
        if (residual_has_projection(d)) {
          ConstMap proj(net.params.data() + o, d.out_dim, d.in_dim);
          MutMap gproj(grad.data() + o, d.out_dim, d.in_dim);
          gproj.noalias() = dv * x_in.transpose();
          dx.noalias() += proj.transpose() * dv;
        } else {
          dx += dv;
        }
        break;
      }
      case LayerKind::ConvResidual: {
        const ConvGeom g1 = make_geom(in_shape, d.out_channels, 3, d.stride, 1);
        const TensorShape mid{d.out_channels, g1.h_out, g1.w_out};
        const ConvGeom g2 = make_geom(mid, d.out_channels, 3, 1, 1);
        Eigen::Index o = off;
        ConstMap w1(net.params.data() + o, g1.out_c,
                    static_cast<Eigen::Index>(g1.in_c) * 9);
        MutMap gw1(grad.data() + o, w1.rows(), w1.cols());
        o += w1.size();
        MutVecMap gb1(grad.data() + o, g1.out_c);
        o += g1.out_c;
        ConstMap w2(net.params.data() + o, g2.out_c,
                    static_cast<Eigen::Index>(g2.in_c) * 9);
        MutMap gw2(grad.data() + o, w2.rows(), w2.cols());
        o += w2.size();
        MutVecMap gb2(grad.data() + o, g2.out_c);
        o += g2.out_c;

        const Eigen::MatrixXd& h = trace.hidden[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd& y = trace.acts[static_cast<std::size_t>(i) + 1];
        Eigen::MatrixXd dv_blob;
        if (d.final_act)
          dv_blob = (dx.array() * (y.array() > 0.0).cast<double>()).matrix();
        else
          dv_blob = std::move(dx);

        const Eigen::MatrixXd dv = unpack_blob(dv_blob, g2, batch);
        gw2.noalias() =
            dv * trace.cols2[static_cast<std::size_t>(i)].transpose();
        gb2 = dv.rowwise().sum();
        Eigen::MatrixXd dh = col2im(w2.transpose() * dv, g2, batch);
        dh.array() *= (h.array() > 0.0).cast<double>();

        const Eigen::MatrixXd du = unpack_blob(dh, g1, batch);
        gw1.noalias() =
            du * trace.cols1[static_cast<std::size_t>(i)].transpose();
        gb1 = du.rowwise().sum();
        dx = col2im(w1.transpose() * du, g1, batch);

        if (conv_res_has_projection(d)) {
          const ConvGeom gp = make_geom(in_shape, d.out_channels, 1, d.stride, 0);
          ConstMap wp(net.params.data() + o, gp.out_c, gp.in_c);
          MutMap gwp(grad.data() + o, gp.out_c, gp.in_c);
          const Eigen::MatrixXd dp = unpack_blob(dv_blob, gp, batch);
          gwp.noalias() =
              dp * trace.cols3[static_cast<std::size_t>(i)].transpose();
          dx += col2im(wp.transpose() * dp, gp, batch);
        } else {
          dx += dv_blob;
        }
        break;
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd forward_columns(const Network& net,
                                const std::vector<Image>& batch) {
  const std::vector<TensorShape> shapes = infer_shapes(net.profile);
  return run_forward(net, batch_matrix(net, batch), shapes, nullptr);
}

Eigen::MatrixXd forward(const Network& net, const std::vector<Image>& batch) {
  return forward_columns(net, batch).transpose();
}

LossGrad loss_and_grad(const Network& predictor, const Network& target,
                       const std::vector<Image>& batch) {
  if (predictor.frozen)
    throw std::invalid_argument("loss_and_grad: predictor is frozen");
  if (!target.frozen)
    throw std::invalid_argument("loss_and_grad: target must be frozen");
  if (output_dim(predictor.profile) != output_dim(target.profile))
    throw std::invalid_argument("loss_and_grad: output_dim mismatch");

  const std::vector<TensorShape> shapes = infer_shapes(predictor.profile);
  ForwardTrace trace;
  const Eigen::MatrixXd f =
      run_forward(predictor, batch_matrix(predictor, batch), shapes, &trace);
  const Eigen::MatrixXd g = forward_columns(target, batch);

  const double batch_n = static_cast<double>(batch.size());
  const Eigen::MatrixXd diff = f - g;
  LossGrad out;
  out.loss = diff.squaredNorm() / batch_n;
  out.grad = Eigen::VectorXd::Zero(predictor.params.size());
  run_backward(predictor, shapes, trace, (2.0 / batch_n) * diff, out.grad);
  return out;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (!grads.allFinite())
    throw std::invalid_argument("adam_step: non-finite gradient");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v +
            (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -=
      lr * (state.m.array() / c1) /
      ((state.v.array() / c2).sqrt() + state.eps);
}

std::uint64_t param_hash(const Network& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(net.params.data());
  const std::size_t n = static_cast<std::size_t>(net.params.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace rndood
