#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tcode/autodiff.hpp"
#include "tcode/errors.hpp"
#include "tcode/tensor.hpp"

namespace tcode {

enum class Activation { relu, elu };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "elu"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected relu or elu)");
}

/// Multilayer perceptron f: R^D -> R^n.
///
/// `widths` lists every layer width including input and output, so a model with
/// widths {64, 128, 128, 4} has two hidden layers. Hidden layers use their listed
/// activation; the output layer is linear. Weights are stored [fan_in x fan_out].
class EncoderModel {
public:
  EncoderModel() = default;

  EncoderModel(std::vector<std::size_t> widths, std::vector<Activation> activations)
      : widths_(std::move(widths)), activations_(std::move(activations)) {
    if (widths_.size() < 2) throw ConfigError("encoder needs at least input and output widths");
    for (std::size_t w : widths_) {
      if (w == 0) throw ConfigError("encoder layer widths must be positive");
    }
    if (activations_.size() != widths_.size() - 2) {
      throw ConfigError("encoder needs one activation per hidden layer (" + std::to_string(widths_.size() - 2) +
                        "), got " + std::to_string(activations_.size()));
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      weights_.emplace_back(Shape{widths_[l], widths_[l + 1]});
      biases_.emplace_back(Shape{widths_[l + 1]});
    }
  }

  /// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  static EncoderModel initialized(std::vector<std::size_t> widths, std::vector<Activation> activations,
                                  std::uint64_t seed) {
    EncoderModel m(std::move(widths), std::move(activations));
    std::mt19937_64 rng(seed);
    for (Tensor& w : m.weights_) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.dim(0)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : w.data()) v = dist(rng);
    }
    return m;
  }

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  const std::vector<Activation>& activations() const { return activations_; }

  Tensor& weight(std::size_t l) { return weights_.at(l); }
  Tensor& bias(std::size_t l) { return biases_.at(l); }
  const Tensor& weight(std::size_t l) const { return weights_.at(l); }
  const Tensor& bias(std::size_t l) const { return biases_.at(l); }

  /// Parameters in a fixed order: w0, b0, w1, b1, ...
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* p : parameters()) n += p->size();
    return n;
  }

  void zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
  }

  /// Records the forward pass on the batch's tape. Gradients land in the parameter tensors.
  Var forward(Var batch) {
    Tape& tape = batch.tape();
    const Tensor& x = tape.value(batch);
    if (x.rank() != 2 || x.dim(1) != input_dim()) {
      throw DimensionError("encoder expects [B x " + std::to_string(input_dim()) + "] input, got " +
                           to_string(x.shape()));
    }
    Var h = batch;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = linear(h, tape.parameter(weights_[l]), tape.parameter(biases_[l]));
      if (l + 1 < weights_.size()) h = activations_[l] == Activation::relu ? relu(h) : elu(h);
    }
    return h;
  }

  /// Gradient-free evaluation.
  Tensor embed(const Tensor& batch) const {
    if (batch.rank() != 2 || batch.dim(1) != input_dim()) {
      throw DimensionError("encoder expects [B x " + std::to_string(input_dim()) + "] input, got " +
                           to_string(batch.shape()));
    }
    const std::size_t rows = batch.dim(0);
    Tensor h = batch;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const std::size_t k = widths_[l], n = widths_[l + 1];
      Tensor out(Shape{rows, n});
      auto O = detail::as_matrix(out.data(), rows, n);
      O.noalias() = detail::as_matrix(h.data(), rows, k) * detail::as_matrix(weights_[l].data(), k, n);
      O.rowwise() += detail::as_matrix(biases_[l].data(), 1, n).row(0);
      if (l + 1 < weights_.size()) {
        for (double& v : out.data()) {
          v = v > 0.0 ? v : (activations_[l] == Activation::relu ? 0.0 : std::expm1(v));
        }
      }
      h = std::move(out);
    }
    return h;
  }

private:
  std::vector<std::size_t> widths_;
  std::vector<Activation> activations_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace tcode
