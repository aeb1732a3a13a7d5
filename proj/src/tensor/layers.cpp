#include "sfseg/layers.hpp"

#include <cmath>

namespace sfseg {

template <typename T>
ConvLayer<T> ConvLayer<T>::he_uniform(std::int64_t cin, std::int64_t cout, int kernel, Conv2dSpec spec,
                                      bool with_bias, Rng& rng) {
  ConvLayer layer;
  layer.spec = spec;
  layer.weight = Tensor<T>({cout, cin, kernel, kernel});
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * kernel * kernel));
  for (auto& v : layer.weight.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  layer.weight.set_requires_grad(true);
  if (with_bias) layer.bias = Tensor<T>({cout}).set_requires_grad(true);
  return layer;
}

template <typename T>
void ConvLayer<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".weight", weight);
  if (bias.defined()) fn(prefix + ".bias", bias);
}

template <typename T>
BatchNormLayer<T> BatchNormLayer<T>::identity(std::int64_t channels) {
  BatchNormLayer layer;
  layer.gamma = Tensor<T>({channels}, T(1)).set_requires_grad(true);
  layer.beta = Tensor<T>({channels}, T(0)).set_requires_grad(true);
  layer.state = BatchNormState<T>::standard(channels);
  return layer;
}

template <typename T>
void BatchNormLayer<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

template <typename T>
void BatchNormLayer<T>::visit_buffers(const std::string& prefix, const BufferVisitor<T>& fn) {
  fn(prefix + ".running_mean", state.running_mean);
  fn(prefix + ".running_var", state.running_var);
}

template <typename T>
ResidualBlock<T> ResidualBlock<T>::make(std::int64_t cin, std::int64_t cout, int stride, bool batchnorm, Rng& rng) {
  ResidualBlock b;
  const bool conv_bias = !batchnorm;
  b.conv1 = ConvLayer<T>::he_uniform(cin, cout, 3, {stride, 1}, conv_bias, rng);
  b.conv2 = ConvLayer<T>::he_uniform(cout, cout, 3, {1, 1}, conv_bias, rng);
  if (batchnorm) {
    b.bn1 = BatchNormLayer<T>::identity(cout);
    b.bn2 = BatchNormLayer<T>::identity(cout);
  }
  if (stride > 1 || cin != cout) {
    Shortcut s{ConvLayer<T>::he_uniform(cin, cout, 1, {stride, 0}, conv_bias, rng), std::nullopt};
    if (batchnorm) s.bn = BatchNormLayer<T>::identity(cout);
    b.downsample = std::move(s);
  }
  return b;
}

template <typename T>
void ResidualBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  conv1.visit(prefix + ".conv1", fn);
  if (bn1) bn1->visit(prefix + ".bn1", fn);
  conv2.visit(prefix + ".conv2", fn);
  if (bn2) bn2->visit(prefix + ".bn2", fn);
  if (downsample) {
    downsample->conv.visit(prefix + ".downsample.conv", fn);
    if (downsample->bn) downsample->bn->visit(prefix + ".downsample.bn", fn);
  }
}

template <typename T>
void ResidualBlock<T>::visit_buffers(const std::string& prefix, const BufferVisitor<T>& fn) {
  if (bn1) bn1->visit_buffers(prefix + ".bn1", fn);
  if (bn2) bn2->visit_buffers(prefix + ".bn2", fn);
  if (downsample && downsample->bn) downsample->bn->visit_buffers(prefix + ".downsample.bn", fn);
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& input, ResidualBlock<T>& block, Mode mode, Tape<T>* tape) {
  auto h = block.conv1.forward(input, tape);
  if (block.bn1) h = block.bn1->forward(h, mode, tape);
  h = relu(h, tape);
  h = block.conv2.forward(h, tape);
  if (block.bn2) h = block.bn2->forward(h, mode, tape);

  Tensor<T> shortcut = input;
  if (block.downsample) {
    shortcut = block.downsample->conv.forward(input, tape);
    if (block.downsample->bn) shortcut = block.downsample->bn->forward(shortcut, mode, tape);
  }
  if (shortcut.shape() != h.shape()) {
    throw DimensionError("residual_block: shortcut " + shape_str(shortcut.shape()) + " does not match residual " +
                         shape_str(h.shape()) + " (missing downsample?)");
  }
  return relu(add(h, shortcut, tape), tape);
}

template <typename T>
void sgd_momentum_step(std::span<Tensor<T>> params, std::vector<Tensor<T>>& velocities, T lr, T momentum) {
  if (velocities.empty()) {
    velocities.reserve(params.size());
    for (const auto& p : params) velocities.emplace_back(p.shape());
  }
  if (velocities.size() != params.size()) {
    throw DimensionError("sgd_momentum_step: " + std::to_string(velocities.size()) + " velocities for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (velocities[i].shape() != params[i].shape()) {
      throw DimensionError("sgd_momentum_step: velocity " + std::to_string(i) + " has shape " +
                           shape_str(velocities[i].shape()) + ", parameter has " + shape_str(params[i].shape()));
    }
    if (params[i].grad().size() != params[i].numel()) {
      throw StateError("sgd_momentum_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = params[i].grad();
    auto v = velocities[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;
template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template Tensor<float> residual_block<float>(const Tensor<float>&, ResidualBlock<float>&, Mode, Tape<float>*);
template Tensor<double> residual_block<double>(const Tensor<double>&, ResidualBlock<double>&, Mode, Tape<double>*);
template void sgd_momentum_step<float>(std::span<Tensor<float>>, std::vector<Tensor<float>>&, float, float);
template void sgd_momentum_step<double>(std::span<Tensor<double>>, std::vector<Tensor<double>>&, double, double);

}  // namespace sfseg
