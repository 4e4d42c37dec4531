#pragma once

#include "colf/nn/common.hpp"

#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

namespace colf::nn {

// Shape of a ReLU multilayer perceptron with an affine output layer.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims{256, 256, 128};
  int output_dim = 1;

  void validate() const;
  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  int layer_in(int layer) const;
  int layer_out(int layer) const;
  std::size_t parameter_count() const;
  std::string to_string() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/**
 * Weights and biases of one MLP, stored in a single flat buffer.
 *
 * Flat order is layer by layer: W_0 (column-major, out x in), b_0, W_1, b_1,
 * ... This is also the serialization order. Every non-const accessor bumps a
 * revision counter so forward caches can detect that the parameters changed
 * underneath them.
 */
template <typename S>
class ParameterSet {
 public:
  using Scalar = S;

  ParameterSet() = default;
  explicit ParameterSet(const MlpSpec& spec) : spec_(spec) {
    spec_.validate();
    std::size_t offset = 0;
    for (int l = 0; l < spec_.num_layers(); ++l) {
      weight_offset_.push_back(offset);
      offset += static_cast<std::size_t>(spec_.layer_in(l)) * spec_.layer_out(l);
      bias_offset_.push_back(offset);
      offset += static_cast<std::size_t>(spec_.layer_out(l));
    }
    flat_ = Vec<S>::Zero(static_cast<Eigen::Index>(offset));
  }

  const MlpSpec& spec() const { return spec_; }
  Eigen::Index size() const { return flat_.size(); }
  std::uint64_t revision() const { return revision_; }

  Eigen::Map<const Mat<S>> weight(int l) const {
    return {flat_.data() + weight_offset_.at(l), spec_.layer_out(l), spec_.layer_in(l)};
  }
  Eigen::Map<Mat<S>> weight(int l) {
    ++revision_;
    return {flat_.data() + weight_offset_.at(l), spec_.layer_out(l), spec_.layer_in(l)};
  }
  Eigen::Map<const Vec<S>> bias(int l) const {
    return {flat_.data() + bias_offset_.at(l), spec_.layer_out(l)};
  }
  Eigen::Map<Vec<S>> bias(int l) {
    ++revision_;
    return {flat_.data() + bias_offset_.at(l), spec_.layer_out(l)};
  }

  const Vec<S>& flat() const { return flat_; }
  Vec<S>& flat() {
    ++revision_;
    return flat_;
  }

  bool all_finite() const { return flat_.allFinite(); }

  template <typename T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out(spec_);
    out.flat() = flat_.template cast<T>();
    return out;
  }

 private:
  MlpSpec spec_;
  Vec<S> flat_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::uint64_t revision_ = 0;
};

// Activations recorded by a forward pass; consumed by mlp_backward.
template <typename S>
struct MlpCache {
  const void* owner = nullptr;
  std::uint64_t revision = 0;
  Mat<S> input;                     // input_dim x batch
  std::vector<Mat<S>> activations;  // post-ReLU output of each hidden layer
};

// Batched forward pass. Columns of `x` are samples.
template <typename S>
Mat<S> mlp_forward(const ParameterSet<S>& params, const Mat<S>& x, MlpCache<S>* cache = nullptr) {
  const MlpSpec& spec = params.spec();
  require(x.rows() == spec.input_dim, "mlp_forward: input has " + std::to_string(x.rows()) +
                                          " rows, network expects " + std::to_string(spec.input_dim));
  if (!x.allFinite()) throw NonFiniteError("mlp_forward: non-finite input");

  if (cache != nullptr) {
    cache->owner = &params;
    cache->revision = params.revision();
    cache->input = x;
    cache->activations.resize(spec.hidden_dims.size());
  }
  Mat<S> h;
  const Mat<S>* in = &x;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Mat<S> z(spec.layer_out(l), x.cols());
    z.noalias() = params.weight(l) * (*in);
    z.colwise() += params.bias(l);
    if (l + 1 == spec.num_layers()) return z;
    z = z.cwiseMax(S(0));
    if (cache != nullptr) {
      cache->activations[l] = std::move(z);
      in = &cache->activations[l];
    } else {
      h = std::move(z);
      in = &h;
    }
  }
  return {};  // unreachable: num_layers() >= 2
}

// Single-sample convenience form.
template <typename S>
Vec<S> mlp_forward(const ParameterSet<S>& params, const Vec<S>& x, MlpCache<S>* cache = nullptr) {
  Mat<S> xm = x;
  return mlp_forward(params, xm, cache);
}

template <typename S>
struct MlpGradients {
  ParameterSet<S> params;  // summed over the batch
  Mat<S> input;            // input_dim x batch
};

/**
 * Reverse-mode pass through the cached forward computation.
 *
 * `grad_output` holds dLoss/dOutput for every sample column. Parameter
 * gradients are summed over the batch, so callers that average their loss
 * must scale grad_output accordingly.
 */
template <typename S>
MlpGradients<S> mlp_backward(const ParameterSet<S>& params, const MlpCache<S>& cache,
                             const std::type_identity_t<Mat<S>>& grad_output, bool want_input_grad = true) {
  const MlpSpec& spec = params.spec();
  require(cache.owner == &params && cache.revision == params.revision(),
          "mlp_backward: cache was produced by a different or since-modified parameter set");
  require(cache.activations.size() == spec.hidden_dims.size() && cache.input.rows() == spec.input_dim,
          "mlp_backward: cache does not match network shape");
  require(grad_output.rows() == spec.output_dim && grad_output.cols() == cache.input.cols(),
          "mlp_backward: grad_output shape mismatch");

  MlpGradients<S> out{ParameterSet<S>(spec), Mat<S>()};
  Mat<S> delta = grad_output;
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const Mat<S>& a_in = l == 0 ? cache.input : cache.activations[l - 1];
    out.params.weight(l).noalias() = delta * a_in.transpose();
    out.params.bias(l) = delta.rowwise().sum();
    if (l == 0 && !want_input_grad) break;
    Mat<S> back(spec.layer_in(l), delta.cols());
    back.noalias() = params.weight(l).transpose() * delta;
    if (l > 0) {
      back = (a_in.array() > S(0)).select(back, S(0));
      delta = std::move(back);
    } else {
      out.input = std::move(back);
    }
  }
  return out;
}

// Orthogonal init for hidden layers (gain sqrt 2), zero biases, and the final
// layer scaled by `output_gain`.
template <typename S>
void orthogonal_init(ParameterSet<S>& params, Rng& rng, double hidden_gain, double output_gain);

extern template void orthogonal_init<float>(ParameterSet<float>&, Rng&, double, double);
extern template void orthogonal_init<double>(ParameterSet<double>&, Rng&, double, double);

}  // namespace colf::nn
