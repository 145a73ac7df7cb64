#include "retisynth/network.hpp"

#include <cmath>
#include <cstring>

namespace retisynth {

namespace {

template <typename T>
void fill_normal(BasicTensor<T>& t, std::mt19937_64& rng, double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_const(BasicTensor<T>& t, T value) {
  for (auto& v : t.mutable_data()) v = value;
}

double init_sd(InitScheme scheme, std::size_t fan_in) {
  return scheme == InitScheme::dcgan ? 0.02 : std::sqrt(2.0 / static_cast<double>(fan_in));
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* who) {
  if (in + 2 * pad < k) throw ConfigError(std::string(who) + ": kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
BasicTensor<T> zeros_param(Shape s) {
  return BasicTensor<T>::parameter(s, std::vector<T>(shape_numel(s), T(0)));
}

}  // namespace

template <typename T>
LinearLayer<T>::LinearLayer(std::size_t in, std::size_t out)
    : weight(zeros_param<T>({out, in})), bias(zeros_param<T>({out})) {}

template <typename T>
Shape LinearLayer<T>::output_shape(const Shape& in) const {
  if (in.size() != 1 || in[0] != weight.dim(1))
    throw DimensionError("linear: expects per-sample shape [" + std::to_string(weight.dim(1)) + "], got " +
                         shape_str(in));
  return {weight.dim(0)};
}

template <typename T>
std::unique_ptr<Layer<T>> LinearLayer<T>::clone() const {
  auto l = std::make_unique<LinearLayer>(*this);
  l->weight = weight.clone();
  l->bias = bias.clone();
  return l;
}

template <typename T>
void LinearLayer<T>::initialize(std::mt19937_64& rng, InitScheme scheme) {
  fill_normal(weight, rng, 0.0, init_sd(scheme, weight.dim(1)));
  fill_const(bias, T(0));
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t pad)
    : weight(zeros_param<T>({out, in, kernel, kernel})), bias(zeros_param<T>({out})), stride(stride), pad(pad) {
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
}

template <typename T>
Shape Conv2dLayer<T>::output_shape(const Shape& in) const {
  if (in.size() != 3 || in[0] != weight.dim(1))
    throw DimensionError("conv2d: expects [" + std::to_string(weight.dim(1)) + ",H,W], got " + shape_str(in));
  const std::size_t k = weight.dim(2);
  return {weight.dim(0), conv_out(in[1], k, stride, pad, "conv2d"), conv_out(in[2], k, stride, pad, "conv2d")};
}

template <typename T>
std::unique_ptr<Layer<T>> Conv2dLayer<T>::clone() const {
  auto l = std::make_unique<Conv2dLayer>(*this);
  l->weight = weight.clone();
  l->bias = bias.clone();
  return l;
}

template <typename T>
void Conv2dLayer<T>::initialize(std::mt19937_64& rng, InitScheme scheme) {
  fill_normal(weight, rng, 0.0, init_sd(scheme, weight.dim(1) * weight.dim(2) * weight.dim(3)));
  fill_const(bias, T(0));
}

template <typename T>
ConvTranspose2dLayer<T>::ConvTranspose2dLayer(std::size_t in, std::size_t out, std::size_t kernel,
                                              std::size_t stride, std::size_t pad)
    : weight(zeros_param<T>({in, out, kernel, kernel})), bias(zeros_param<T>({out})), stride(stride), pad(pad) {
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be >= 1");
}

template <typename T>
Shape ConvTranspose2dLayer<T>::output_shape(const Shape& in) const {
  if (in.size() != 3 || in[0] != weight.dim(0))
    throw DimensionError("conv_transpose2d: expects [" + std::to_string(weight.dim(0)) + ",H,W], got " +
                         shape_str(in));
  const std::size_t k = weight.dim(2);
  auto side = [&](std::size_t n) {
    const long v = static_cast<long>((n - 1) * stride + k) - static_cast<long>(2 * pad);
    if (v < 1) throw ConfigError("conv_transpose2d: non-positive output size");
    return static_cast<std::size_t>(v);
  };
  return {weight.dim(1), side(in[1]), side(in[2])};
}

template <typename T>
std::unique_ptr<Layer<T>> ConvTranspose2dLayer<T>::clone() const {
  auto l = std::make_unique<ConvTranspose2dLayer>(*this);
  l->weight = weight.clone();
  l->bias = bias.clone();
  return l;
}

template <typename T>
void ConvTranspose2dLayer<T>::initialize(std::mt19937_64& rng, InitScheme scheme) {
  fill_normal(weight, rng, 0.0, init_sd(scheme, weight.dim(0) * weight.dim(2) * weight.dim(3)));
  fill_const(bias, T(0));
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t channels, T momentum, T eps)
    : gamma(BasicTensor<T>::parameter({channels}, std::vector<T>(channels, T(1)))),
      beta(zeros_param<T>({channels})),
      stats(channels),
      momentum(momentum),
      eps(eps) {}

template <typename T>
Shape BatchNormLayer<T>::output_shape(const Shape& in) const {
  if ((in.size() != 3 && in.size() != 1) || in[0] != gamma.numel())
    throw DimensionError("batchnorm2d: expects " + std::to_string(gamma.numel()) + " channels, got " +
                         shape_str(in));
  return in;
}

template <typename T>
std::unique_ptr<Layer<T>> BatchNormLayer<T>::clone() const {
  auto l = std::make_unique<BatchNormLayer>(*this);
  l->gamma = gamma.clone();
  l->beta = beta.clone();
  return l;
}

template <typename T>
void BatchNormLayer<T>::initialize(std::mt19937_64& rng, InitScheme) {
  fill_normal(gamma, rng, 1.0, 0.02);
  fill_const(beta, T(0));
  stats = BatchNormStats<T>(gamma.numel());
}

template <typename T>
std::string ActivationLayer<T>::kind() const {
  switch (act.kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
  }
  return "activation";
}

template <typename T>
std::string PoolLayer<T>::kind() const {
  switch (pool) {
    case PoolKind::avg_pool2: return "avg_pool2";
    case PoolKind::global_avg: return "global_avg";
    case PoolKind::nearest_upsample2: return "nearest_upsample2";
  }
  return "pool";
}

template <typename T>
Shape PoolLayer<T>::output_shape(const Shape& in) const {
  if (in.size() != 3) throw DimensionError(kind() + ": expects [C,H,W], got " + shape_str(in));
  switch (pool) {
    case PoolKind::avg_pool2:
      if (in[1] % 2 || in[2] % 2) throw DimensionError("avg_pool2: odd spatial dims " + shape_str(in));
      return {in[0], in[1] / 2, in[2] / 2};
    case PoolKind::global_avg:
      return {in[0]};
    case PoolKind::nearest_upsample2:
      return {in[0], in[1] * 2, in[2] * 2};
  }
  return in;
}

template <typename T>
Shape ReshapeLayer<T>::output_shape(const Shape& in) const {
  if (shape_numel(in) != shape_numel(target))
    throw DimensionError("reshape: cannot view " + shape_str(in) + " as " + shape_str(target));
  return target;
}

template <typename T>
BasicTensor<T> ReshapeLayer<T>::forward(const BasicTensor<T>& x, NormMode) {
  Shape s{x.dim(0)};
  s.insert(s.end(), target.begin(), target.end());
  return reshape(x, std::move(s));
}

std::string NetSpec::get(const std::string& key) const {
  auto it = args.find(key);
  if (it == args.end()) throw LookupError("network spec '" + kind + "' has no argument '" + key + "'");
  return it->second;
}

long NetSpec::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    long out = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("network spec argument '" + key + "' is not an integer: " + v);
  }
}

template <typename T>
Network<T>::Network(NetSpec spec, Shape input_shape)
    : spec_(std::move(spec)), input_shape_(input_shape), current_shape_(std::move(input_shape)) {}

template <typename T>
Network<T>::Network(const Network& other)
    : spec_(other.spec_),
      input_shape_(other.input_shape_),
      current_shape_(other.current_shape_),
      names_(other.names_),
      taps_(other.taps_),
      mode_(other.mode_),
      flexible_(other.flexible_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
void Network<T>::add(std::string name, std::unique_ptr<Layer<T>> layer) {
  for (const auto& n : names_)
    if (n == name) throw ConfigError("duplicate layer name '" + name + "'");
  current_shape_ = layer->output_shape(current_shape_);
  layers_.push_back(std::move(layer));
  names_.push_back(std::move(name));
}

template <typename T>
void Network<T>::add_tap(const std::string& tap) {
  if (layers_.empty()) throw ConfigError("tap '" + tap + "' added before any layer");
  if (!taps_.emplace(tap, layers_.size() - 1).second) throw ConfigError("duplicate tap '" + tap + "'");
}

template <typename T>
std::size_t Network<T>::tap_index(const std::string& tap) const {
  auto it = taps_.find(tap);
  if (it == taps_.end()) throw LookupError("network '" + spec_.kind + "' has no tap '" + tap + "'");
  return it->second;
}

template <typename T>
ForwardResult<T> Network<T>::forward(const BasicTensor<T>& x, std::span<const std::string> want_taps) {
  const bool shape_ok =
      x.rank() == input_shape_.size() + 1 &&
      (flexible_ ? x.dim(1) == input_shape_[0]
                 : std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1));
  if (!shape_ok)
    throw DimensionError("network '" + spec_.kind + "' expects N×" + shape_str(input_shape_) + ", got " +
                         shape_str(x.shape()));
  std::map<std::size_t, std::vector<std::string>> wanted;
  for (const auto& t : want_taps) wanted[tap_index(t)].push_back(t);

  ForwardResult<T> result;
  BasicTensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, mode_);
    if (auto it = wanted.find(i); it != wanted.end())
      for (const auto& t : it->second) result.taps.emplace(t, h);
  }
  result.output = h;
  return result;
}

template <typename T>
std::vector<NamedTensor<T>> Network<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& p : layers_[i]->parameters()) out.push_back({names_[i] + "." + p.name, p.tensor});
  return out;
}

template <typename T>
std::vector<BufferRef<T>> Network<T>::buffers() {
  std::vector<BufferRef<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& b : layers_[i]->buffers()) out.push_back({names_[i] + "." + b.name, b.values});
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
std::uint64_t Network<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : parameters()) {
    const auto bytes = std::as_bytes(p.tensor.data());
    for (std::byte b : bytes) {
      h ^= static_cast<std::uint64_t>(b);
      h *= 1099511628211ull;
    }
  }
  return h;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed, InitScheme scheme) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) l->initialize(rng, scheme);
}

template <typename T>
void Network<T>::smoke_test() {
  const NormMode saved = mode_;
  mode_ = NormMode::eval;
  Shape s{1};
  s.insert(s.end(), input_shape_.begin(), input_shape_.end());
  BasicTensor<T> probe(s, T(0.1));
  auto out = forward(probe).output;
  Shape expected{1};
  expected.insert(expected.end(), current_shape_.begin(), current_shape_.end());
  if (out.shape() != expected)
    throw ContractError("smoke test: network '" + spec_.kind + "' produced " + shape_str(out.shape()) +
                        ", expected " + shape_str(expected));
  sum(out).backward();
  zero_grad();
  mode_ = saved;
}

template class LinearLayer<float>;
template class LinearLayer<double>;
template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class ConvTranspose2dLayer<float>;
template class ConvTranspose2dLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class ActivationLayer<float>;
template class ActivationLayer<double>;
template class PoolLayer<float>;
template class PoolLayer<double>;
template class ReshapeLayer<float>;
template class ReshapeLayer<double>;
template class Network<float>;
template class Network<double>;

}  // namespace retisynth
