#include "pnpcsi/denoiser.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "pnpcsi/simd/kernels.hpp"

namespace pnpcsi {

namespace {

template <typename T>
void relu(std::vector<T>& v) {
  if constexpr (std::is_same_v<T, float>) {
    simd::relu_inplace(v.data(), v.size());
  } else {
    for (auto& x : v) x = x > T(0) ? x : T(0);
  }
}

ConvParams<float> conv_shape(int cout, int cin, int k) {
  ConvParams<float> p;
  p.cout = cout;
  p.cin = cin;
  p.k = k;
  p.weight.assign(static_cast<std::size_t>(cout) * cin * k * k, 0.0f);
  p.bias.assign(cout, 0.0f);
  return p;
}

double matrix_rms(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  return std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

void check_sigma2(double sigma2) {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
    throw InvalidArgument("noise variance must be finite and >= 0, got " +
                          std::to_string(sigma2));
}

template <typename T>
std::vector<ConvParams<T>> zero_like(const std::vector<ConvParams<T>>& layers) {
  std::vector<ConvParams<T>> g(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    g[i].cout = layers[i].cout;
    g[i].cin = layers[i].cin;
    g[i].k = layers[i].k;
    g[i].weight.assign(layers[i].weight.size(), T(0));
    g[i].bias.assign(layers[i].bias.size(), T(0));
  }
  return g;
}

}  // namespace

void DenoiserArch::validate() const {
  if (unshuffle < 1) throw InvalidArgument("unshuffle factor must be >= 1");
  if (in_channels != 3)
    throw InvalidArgument("denoiser expects 3 input channels (re, im, noise)");
  if (width < 1) throw InvalidArgument("width must be >= 1");
  if (mid_layers < 0) throw InvalidArgument("mid_layers must be >= 0");
  if (kernel < 1 || kernel % 2 == 0)
    throw InvalidArgument("kernel size must be odd and positive");
}

template <typename T>
std::size_t ConvNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

DenoiserWeights DenoiserWeights::zeros(const DenoiserArch& arch) {
  arch.validate();
  DenoiserWeights w;
  w.arch = arch;
  const int r2 = arch.unshuffle * arch.unshuffle;
  const int n = arch.conv_layers();
  for (int i = 0; i < n; ++i) {
    const int cin = i == 0 ? arch.in_channels * r2 : arch.width;
    const int cout = i == n - 1 ? arch.out_channels() : arch.width;
    w.layers.push_back(conv_shape(cout, cin, arch.kernel));
    w.names.push_back("conv" + std::to_string(i));
  }
  return w;
}

DenoiserWeights DenoiserWeights::he_uniform(const DenoiserArch& arch,
                                            std::uint64_t seed) {
  DenoiserWeights w = zeros(arch);
  std::mt19937_64 rng(seed);
  for (auto& l : w.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : l.weight) x = static_cast<float>(u(rng));
  }
  return w;
}

std::size_t DenoiserWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

void DenoiserWeights::validate() const {
  arch.validate();
  const DenoiserWeights ref = zeros(arch);
  if (layers.size() != ref.layers.size())
    throw DimensionError("denoiser has " + std::to_string(layers.size()) +
                         " conv layers, architecture needs " +
                         std::to_string(ref.layers.size()));
  if (names.size() != layers.size())
    throw DimensionError("layer name count does not match layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = ref.layers[i];
    if (a.cout != b.cout || a.cin != b.cin || a.k != b.k ||
        a.weight.size() != b.weight.size() || a.bias.size() != b.bias.size())
      throw DimensionError("layer " + names[i] + " has shape " +
                           std::to_string(a.cout) + "x" + std::to_string(a.cin) +
                           "x" + std::to_string(a.k) + ", expected " +
                           std::to_string(b.cout) + "x" + std::to_string(b.cin) +
                           "x" + std::to_string(b.k));
  }
}

template <typename T>
ConvNet<T> DenoiserWeights::as_net() const {
  ConvNet<T> net;
  net.arch = arch;
  for (const auto& l : layers) {
    ConvParams<T> p;
    p.cout = l.cout;
    p.cin = l.cin;
    p.k = l.k;
    p.weight.assign(l.weight.begin(), l.weight.end());
    p.bias.assign(l.bias.begin(), l.bias.end());
    net.layers.push_back(std::move(p));
  }
  return net;
}

template <typename T>
const std::vector<T>& ConvNetRunner<T>::forward(const std::vector<T>& in, int h,
                                                int w) {
  const auto& layers = net_->layers;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  if (layers.empty()) throw DimensionError("network has no layers");
  if (in.size() != static_cast<std::size_t>(layers.front().cin) * hw)
    throw DimensionError("network input size does not match first layer");
  h_ = h;
  w_ = w;
  acts_.resize(layers.size());
  cols_.resize(layers.size());
  acts_[0] = in;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool last = i + 1 == layers.size();
    std::vector<T>& out = last ? out_ : acts_[i + 1];
    out.resize(static_cast<std::size_t>(layers[i].cout) * hw);
    conv_forward_image(acts_[i].data(), h, w, layers[i], out.data(), cols_[i]);
    if (!last) relu(out);
  }
  return out_;
}

template <typename T>
void ConvNetRunner<T>::backward(const std::vector<T>& dout,
                                std::vector<ConvParams<T>>& grads,
                                std::vector<T>* din) {
  const auto& layers = net_->layers;
  const std::size_t hw = static_cast<std::size_t>(h_) * w_;
  if (dout.size() != out_.size())
    throw DimensionError("output gradient size does not match forward output");
  grad_a_ = dout;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& p = layers[li];
    const bool need_din = li > 0 || din != nullptr;
    grad_b_.resize(static_cast<std::size_t>(p.cin) * hw);
    conv_backward_col(cols_[li].data(), grad_a_.data(), h_, w_, p,
                      std::span<T>(grads[li].weight),
                      std::span<T>(grads[li].bias),
                      need_din ? grad_b_.data() : nullptr, scratch_a_,
                      scratch_b_);
    if (li > 0) {
      // acts_[li] is the ReLU output of layer li-1; the mask is its support.
      const std::vector<T>& a = acts_[li];
      for (std::size_t j = 0; j < grad_b_.size(); ++j)
        if (!(a[j] > T(0))) grad_b_[j] = T(0);
    }
    std::swap(grad_a_, grad_b_);
  }
  if (din != nullptr) *din = grad_a_;
}

template <typename T>
std::vector<T> denoiser_input(const CMatrix& noisy, double sigma2,
                              const DenoiserArch& arch, double* scale_out) {
  check_sigma2(sigma2);
  const int rows = static_cast<int>(noisy.rows());
  const int cols = static_cast<int>(noisy.cols());
  double scale = 1.0;
  if (arch.normalize_input) {
    const double rms = matrix_rms(noisy);
    if (rms > 0.0 && std::isfinite(rms)) scale = rms;
  }
  if (scale_out != nullptr) *scale_out = scale;
  Tensor4T<T> x(1, 3, rows, cols);
  const T level = static_cast<T>(std::sqrt(sigma2) / scale);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const cplx v = noisy(i, j) / scale;
      x.at(0, 0, i, j) = static_cast<T>(v.real());
      x.at(0, 1, i, j) = static_cast<T>(v.imag());
      x.at(0, 2, i, j) = level;
    }
  return pixel_unshuffle(x, arch.unshuffle).data;
}

template <typename T>
CMatrix denoiser_output(const std::vector<T>& planes, int rows, int cols,
                        const DenoiserArch& arch, double scale) {
  const int r = arch.unshuffle;
  Tensor4T<T> y(1, arch.out_channels(), rows / r, cols / r);
  if (planes.size() != y.size())
    throw DimensionError("network output size does not match the CSI shape");
  y.data = planes;
  const Tensor4T<T> img = pixel_shuffle(y, r);
  CMatrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out(i, j) = cplx(img.at(0, 0, i, j), img.at(0, 1, i, j)) * scale;
  return out;
}

namespace {

void check_shape(const CMatrix& m, const DenoiserArch& arch) {
  const int r = arch.unshuffle;
  if (m.rows() == 0 || m.cols() == 0)
    throw DimensionError("denoiser input is empty");
  if (m.rows() % r != 0 || m.cols() % r != 0)
    throw DimensionError("CSI shape " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) +
                         " is not divisible by the unshuffle factor " +
                         std::to_string(r));
}

template <typename T>
CMatrix run_forward(ConvNetRunner<T>& runner, const CMatrix& noisy,
                    double sigma2, const DenoiserArch& arch) {
  check_shape(noisy, arch);
  double scale = 1.0;
  const auto in = denoiser_input<T>(noisy, sigma2, arch, &scale);
  const int r = arch.unshuffle;
  const int rows = static_cast<int>(noisy.rows());
  const int cols = static_cast<int>(noisy.cols());
  const auto& out = runner.forward(in, rows / r, cols / r);
  return denoiser_output(out, rows, cols, arch, scale);
}

}  // namespace

AngularCsi denoise(const AngularCsi& noisy, double sigma2,
                   const DenoiserWeights& w) {
  return Denoiser(w)(noisy, sigma2);
}

Denoiser::Denoiser(DenoiserWeights w) : weights_(std::move(w)) {
  weights_.validate();
  net_ = weights_.as_net<float>();
}

AngularCsi Denoiser::operator()(const AngularCsi& noisy, double sigma2) const {
  check_sigma2(sigma2);
  // Activations live in a per-call runner; the network itself is read-only.
  ConvNetRunner<float> runner(net_);
  return AngularCsi(run_forward(runner, noisy.values, sigma2, weights_.arch));
}

AngularCsi shrink_denoise(const AngularCsi& noisy, double sigma2,
                          double kappa) {
  check_sigma2(sigma2);
  if (!(kappa >= 0.0)) throw InvalidArgument("kappa must be >= 0");
  const double t = kappa * std::sqrt(sigma2);
  CMatrix out = noisy.values;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double mag = std::abs(out.data()[i]);
    out.data()[i] *= mag > t ? 1.0 - t / mag : 0.0;
  }
  return AngularCsi(std::move(out));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(initial_lr > 0.0)) throw InvalidArgument("initial_lr must be > 0");
  if (!(lr_floor > 0.0) || lr_floor > initial_lr)
    throw InvalidArgument("lr_floor must lie in (0, initial_lr]");
  if (patience_epochs < 1) throw InvalidArgument("patience must be >= 1");
  if (!(halving_factor > 0.0 && halving_factor < 1.0))
    throw InvalidArgument("halving_factor must lie in (0, 1)");
}

template <typename T>
double loss_and_gradient(const ConvNet<T>& net,
                         const std::vector<TrainSample>& samples,
                         std::vector<ConvParams<T>>& grads) {
  if (samples.empty()) throw InvalidArgument("empty sample set");
  grads = zero_like(net.layers);
  const auto& arch = net.arch;
  const int r = arch.unshuffle;
  ConvNetRunner<T> runner(net);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  double total = 0.0;
  std::vector<T> dout;
  for (const auto& s : samples) {
    const CMatrix& clean = *s.clean;
    const CMatrix& noisy = *s.noisy;
    check_shape(noisy, arch);
    if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols())
      throw DimensionError("clean and noisy CSI shapes differ");
    const double energy = clean.squaredNorm();
    if (!(energy > 0.0)) throw NumericError("clean CSI has zero energy");
    const int rows = static_cast<int>(noisy.rows());
    const int cols = static_cast<int>(noisy.cols());

    double scale = 1.0;
    const auto in = denoiser_input<T>(noisy, s.sigma2, arch, &scale);
    const auto& out = runner.forward(in, rows / r, cols / r);
    const CMatrix est = denoiser_output(out, rows, cols, arch, scale);
    const CMatrix err = est - clean;
    total += err.squaredNorm() / energy;

    // d/d(planes) of ||scale * D - clean||^2 / energy, pushed back through
    // the pixel shuffle by unshuffling the complex gradient.
    const double g = 2.0 * scale * inv_n / energy;
    Tensor4T<T> gimg(1, 2, rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        gimg.at(0, 0, i, j) = static_cast<T>(g * err(i, j).real());
        gimg.at(0, 1, i, j) = static_cast<T>(g * err(i, j).imag());
      }
    dout = pixel_unshuffle(gimg, r).data;
    runner.backward(dout, grads, nullptr);
  }
  return total * inv_n;
}

double denoiser_loss(const DenoiserWeights& w,
                     const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw InvalidArgument("empty sample set");
  const Denoiser d(w);
  double total = 0.0;
  for (const auto& s : samples) {
    const double energy = s.clean->squaredNorm();
    if (!(energy > 0.0)) throw NumericError("clean CSI has zero energy");
    const AngularCsi est = d(AngularCsi(*s.noisy), s.sigma2);
    total += (est.values - *s.clean).squaredNorm() / energy;
  }
  return total / static_cast<double>(samples.size());
}

namespace {

struct Adam {
  double beta1, beta2, eps;
  long step = 0;
  std::vector<std::vector<float>> m, v;

  Adam(const TrainConfig& cfg, const std::vector<ConvParams<float>>& layers)
      : beta1(cfg.adam_beta1), beta2(cfg.adam_beta2), eps(cfg.adam_eps) {
    for (const auto& l : layers) {
      m.emplace_back(l.weight.size() + l.bias.size(), 0.0f);
      v.emplace_back(l.weight.size() + l.bias.size(), 0.0f);
    }
  }

  void update(std::vector<ConvParams<float>>& layers,
              const std::vector<ConvParams<float>>& grads, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const double step_size = lr * std::sqrt(c2) / c1;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto apply = [&](std::vector<float>& p, const std::vector<float>& g,
                       std::size_t offset) {
        for (std::size_t j = 0; j < p.size(); ++j) {
          float& mj = m[i][offset + j];
          float& vj = v[i][offset + j];
          mj = static_cast<float>(beta1 * mj + (1.0 - beta1) * g[j]);
          vj = static_cast<float>(beta2 * vj + (1.0 - beta2) * g[j] * g[j]);
          p[j] -= static_cast<float>(step_size * mj /
                                     (std::sqrt(static_cast<double>(vj)) +
                                      eps * std::sqrt(c2)));
        }
      };
      apply(layers[i].weight, grads[i].weight, 0);
      apply(layers[i].bias, grads[i].bias, layers[i].weight.size());
    }
  }
};

}  // namespace

TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set,
                  const DenoiserArch& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  if (val_set.empty()) throw InvalidArgument("validation set is empty");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  DenoiserWeights w = DenoiserWeights::he_uniform(arch, derive_seed(cfg.seed, 0));
  ConvNet<float> net = w.as_net<float>();
  Adam adam(cfg, net.layers);
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));

  TrainResult result;
  result.weights = w;
  double best = std::numeric_limits<double>::infinity();
  double lr = cfg.initial_lr;
  int since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ConvParams<float>> grads;
  std::vector<TrainSample> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      const double loss = loss_and_gradient(net, batch, grads);
      if (!std::isfinite(loss))
        throw NumericError("training loss became non-finite at epoch " +
                           std::to_string(epoch));
      train_sum += loss * static_cast<double>(batch.size());
      adam.update(net.layers, grads, lr);
    }

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      w.layers[i].weight = net.layers[i].weight;
      w.layers[i].bias = net.layers[i].bias;
    }
    const double val = denoiser_loss(w, val_set);
    if (!std::isfinite(val))
      throw NumericError("validation loss became non-finite at epoch " +
                         std::to_string(epoch));

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_sum / static_cast<double>(order.size());
    st.val_loss = val;
    st.lr = lr;
    st.seconds = elapsed();
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);

    if (val < best) {
      best = val;
      result.weights = w;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience_epochs) {
      lr = std::max(cfg.lr_floor, lr * cfg.halving_factor);
      since_best = 0;
    }
    if (cfg.max_seconds > 0.0 && elapsed() >= cfg.max_seconds) break;
  }
  return result;
}

std::vector<TrainSample> angular_pairs(const std::vector<Sample>& samples) {
  std::vector<TrainSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back({&s.clean_ad.values, &s.noisy_ad.values, s.sigma2});
  return out;
}

TrainResult train(const Dataset& data, const DenoiserArch& arch,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return train(angular_pairs(data.train), angular_pairs(data.val), arch, cfg,
               on_epoch);
}

template struct ConvNet<float>;
template struct ConvNet<double>;
template class ConvNetRunner<float>;
template class ConvNetRunner<double>;
template ConvNet<float> DenoiserWeights::as_net<float>() const;
template ConvNet<double> DenoiserWeights::as_net<double>() const;
template std::vector<float> denoiser_input<float>(const CMatrix&, double,
                                                  const DenoiserArch&, double*);
template std::vector<double> denoiser_input<double>(const CMatrix&, double,
                                                    const DenoiserArch&,
                                                    double*);
template CMatrix denoiser_output<float>(const std::vector<float>&, int, int,
                                        const DenoiserArch&, double);
template CMatrix denoiser_output<double>(const std::vector<double>&, int, int,
                                         const DenoiserArch&, double);
template double loss_and_gradient<float>(const ConvNet<float>&,
                                         const std::vector<TrainSample>&,
                                         std::vector<ConvParams<float>>&);
template double loss_and_gradient<double>(const ConvNet<double>&,
                                          const std::vector<TrainSample>&,
                                          std::vector<ConvParams<double>>&);

}  // namespace pnpcsi
