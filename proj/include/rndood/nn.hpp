#ifndef RNDOOD_NN_HPP
#define RNDOOD_NN_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "rndood/image.hpp"

namespace rndood {

enum class Activation { None, Relu, LeakyRelu };

enum class LayerKind {
  Conv,
  Act,
  Dense,
  Flatten,
  GlobalAvgPool,
  Residual,      // dense block: y = act(W2 relu(W1 x + b1) + b2 + P x)
  ConvResidual,  // 3x3 basic block: y = act(conv2(relu(conv1(x))) + proj(x))
};

/// One layer descriptor; only the fields of the kind are read. Conv is
/// kernel x kernel, zero padded. The residual projections (dense P, conv
/// 1x1 proj) appear only when the widths or the stride demand them.
struct LayerDesc {
  LayerKind kind = LayerKind::Act;

  int in_channels = 0, out_channels = 0;  // conv, conv_residual
  int kernel = 3, stride = 1, pad = 1;

  Activation act = Activation::None;      // act
  double slope = 0.01;                    // leaky-relu only

  int in_dim = 0, out_dim = 0;            // dense, residual
  bool final_act = true;                  // residual kinds

  static LayerDesc conv(int in_c, int out_c, int kernel, int stride, int pad);
  static LayerDesc activation(Activation a, double slope = 0.01);
  static LayerDesc dense(int in_dim, int out_dim);
  static LayerDesc flatten();
  static LayerDesc global_avg_pool();
  static LayerDesc residual(int in_dim, int out_dim, bool final_act);
  static LayerDesc conv_residual(int in_c, int out_c, int stride,
                                 bool final_act = true);
};

/// Activation shape between layers: feature maps are (channels, height,
/// width); vectors after flatten/pool/dense are (dim, 1, 1).
struct TensorShape {
  int channels = 0, height = 0, width = 0;
  int flat() const { return channels * height * width; }
  bool operator==(const TensorShape&) const = default;
};

struct NetworkProfile {
  std::string name;
  TensorShape input;
  std::vector<LayerDesc> layers;
};

/// Shape after each layer; throws on non-composing layer sequences.
std::vector<TensorShape> infer_shapes(const NetworkProfile& profile);
/// Final feature dimension (the last shape must be a vector).
int output_dim(const NetworkProfile& profile);
/// Total trainable scalar count.
Eigen::Index parameter_count(const NetworkProfile& profile);

/// Desk-scale profiles. The target is a three-conv trunk ending in a dense
/// projection; the predictor extends it with two more dense layers, final
/// layer linear in both.
NetworkProfile tiny_target_profile(TensorShape input);
NetworkProfile tiny_predictor_profile(TensorShape input);

/// Full-scale profiles kept for reference: a ResNet34-style trunk ending in
/// global average pooling to 512 features for the target, plus two dense
/// residual blocks (1024 then 512, second one linear) for the predictor.
/// Runnable on CPU in principle; every default and test sticks to tiny.
NetworkProfile paper_target_profile(TensorShape input);
NetworkProfile paper_predictor_profile(TensorShape input);

NetworkProfile profile_by_name(const std::string& name, TensorShape input,
                               bool predictor);

struct Network {
  NetworkProfile profile;
  Eigen::VectorXd params;
  bool frozen = false;
};

/// He-style init: weights ~ N(0, 2/fan_in) from a single seeded stream,
/// biases zero. Deterministic per (profile, seed).
Network init_network(const NetworkProfile& profile, std::uint64_t seed,
                     bool frozen);

/// Batch forward. Returns batch x output_dim (one feature row per image).
Eigen::MatrixXd forward(const Network& net, const std::vector<Image>& batch);

/// Column-per-sample variant used by the training loop and scorers.
/// Returns output_dim x batch.
Eigen::MatrixXd forward_columns(const Network& net,
                                const std::vector<Image>& batch);

/// Mean over the batch of the squared distance between predictor and target
/// features, plus the gradient w.r.t. the predictor parameters only.
struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};
LossGrad loss_and_grad(const Network& predictor, const Network& target,
                       const std::vector<Image>& batch);

struct AdamState {
  long step = 0;
  Eigen::VectorXd m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(Eigen::Index n)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Standard bias-corrected Adam update, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, double lr);

/// FNV-1a over the parameter bytes; freezing audits compare this.
std::uint64_t param_hash(const Network& net);

}  // namespace rndood

#endif  // RNDOOD_NN_HPP
