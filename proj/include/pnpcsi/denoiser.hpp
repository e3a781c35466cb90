#pragma once

// Noise-level-conditioned convolutional denoiser for truncated
// angular-delay CSI, its training loop, and a soft-threshold fallback.
//
// Pipeline for one matrix:
//   [re, im, sqrt(sigma2) map] -> pixel_unshuffle(r) -> conv + ReLU
//   -> mid_layers x (conv + ReLU) -> conv (2 r^2 outputs) -> pixel_shuffle(r)
//   -> complex estimate.
// With `normalize_input` the three input planes are divided by the RMS of
// the noisy matrix and the output is multiplied back, so the network sees
// unit-scale data for any input power.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pnpcsi/channel_model.hpp"
#include "pnpcsi/tensor.hpp"

namespace pnpcsi {

struct DenoiserArch {
  int unshuffle = 2;
  int in_channels = 3;  // re, im, noise-level map
  int width = 48;
  int mid_layers = 8;
  int kernel = 3;
  bool normalize_input = true;

  int out_channels() const { return 2 * unshuffle * unshuffle; }
  int conv_layers() const { return mid_layers + 2; }
  void validate() const;
  bool operator==(const DenoiserArch&) const = default;
};

// Layer i is named "conv<i>" and is followed by a ReLU unless it is last.
template <typename T>
struct ConvNet {
  DenoiserArch arch;
  std::vector<ConvParams<T>> layers;

  std::size_t parameter_count() const;
};

struct DenoiserWeights {
  DenoiserArch arch;
  std::vector<std::string> names;
  std::vector<ConvParams<float>> layers;

  // Zero weights and biases with the right shapes.
  static DenoiserWeights zeros(const DenoiserArch& arch);
  // He-uniform (fan-in) weights, zero biases.
  static DenoiserWeights he_uniform(const DenoiserArch& arch,
                                    std::uint64_t seed);

  std::size_t parameter_count() const;
  // Throws DimensionError if layer shapes do not chain for `arch`.
  void validate() const;

  template <typename T>
  ConvNet<T> as_net() const;
};

// Per-image forward/backward through the conv stack. Activations of the
// last forward call are kept for backward.
template <typename T>
class ConvNetRunner {
 public:
  explicit ConvNetRunner(const ConvNet<T>& net) : net_(&net) {}

  // in: in_channels*r^2 planes of (h/r) x (w/r); returns the output planes.
  const std::vector<T>& forward(const std::vector<T>& in, int h, int w);

  // dout has the shape of the last forward output. Gradients are added into
  // grads (same layout as net.layers). din is written if non-null.
  void backward(const std::vector<T>& dout, std::vector<ConvParams<T>>& grads,
                std::vector<T>* din);

 private:
  const ConvNet<T>* net_;
  int h_ = 0;
  int w_ = 0;
  std::vector<std::vector<T>> acts_;  // acts_[i] = input of layer i
  std::vector<std::vector<T>> cols_;  // cols_[i] = im2col(acts_[i])
  std::vector<T> out_;
  std::vector<T> scratch_a_, scratch_b_, grad_a_, grad_b_;
};

// Builds the unshuffled network input for a batch of one.
template <typename T>
std::vector<T> denoiser_input(const CMatrix& noisy, double sigma2,
                              const DenoiserArch& arch, double* scale_out);

// Maps network output planes back to a complex matrix (times `scale`).
template <typename T>
CMatrix denoiser_output(const std::vector<T>& planes, int rows, int cols,
                        const DenoiserArch& arch, double scale);

// Full forward pass. Throws DimensionError on weight/shape mismatch and
// InvalidArgument for negative sigma2.
AngularCsi denoise(const AngularCsi& noisy, double sigma2,
                   const DenoiserWeights& w);

// Immutable forward-only wrapper; safe to call concurrently.
class Denoiser {
 public:
  explicit Denoiser(DenoiserWeights w);
  AngularCsi operator()(const AngularCsi& noisy, double sigma2) const;
  const DenoiserWeights& weights() const { return weights_; }

 private:
  DenoiserWeights weights_;
  ConvNet<float> net_;
};

// Complex soft threshold y * max(0, 1 - t/|y|), t = kappa * sqrt(sigma2).
AngularCsi shrink_denoise(const AngularCsi& noisy, double sigma2,
                          double kappa = 1.5);

struct TrainConfig {
  int batch_size = 128;
  int epochs = 200;
  double initial_lr = 1e-4;
  double lr_floor = 1e-7;
  int patience_epochs = 20;
  double halving_factor = 0.5;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Stop early once this much wall time has been spent (0 = no limit).
  double max_seconds = 0.0;

  void validate() const;
};

struct TrainSample {
  const CMatrix* clean = nullptr;
  const CMatrix* noisy = nullptr;
  double sigma2 = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  DenoiserWeights weights;  // best validation loss
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

// Mean over samples of ||clean - D(noisy)||_F^2 / ||clean||_F^2.
double denoiser_loss(const DenoiserWeights& w,
                     const std::vector<TrainSample>& samples);

// Loss and exact parameter gradient for a set of samples, in precision T.
// The gradient layout matches net.layers.
template <typename T>
double loss_and_gradient(const ConvNet<T>& net,
                         const std::vector<TrainSample>& samples,
                         std::vector<ConvParams<T>>& grads);

using EpochCallback = std::function<void(const EpochStats&)>;

// Adam on the normalized loss with plateau halving of the learning rate.
// Throws InvalidArgument on an empty set and NumericError on a NaN loss.
TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set,
                  const DenoiserArch& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

TrainResult train(const Dataset& data, const DenoiserArch& arch,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

std::vector<TrainSample> angular_pairs(const std::vector<Sample>& samples);

}  // namespace pnpcsi
