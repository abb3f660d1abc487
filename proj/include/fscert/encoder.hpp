#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fscert/autodiff.hpp"
#include "fscert/dataset.hpp"
#include "fscert/feature_map.hpp"
#include "fscert/vec.hpp"

namespace fscert {

enum class EncoderKind { RandomLinear, Mlp, MlpTrained };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& s);

// Deterministic feature encoder emitting unit-l2-norm features.
//   random-linear: normalize(W x + b)
//   mlp:           tanh hidden layers, linear output, then normalize
// Parameters are drawn from a seeded uniform distribution scaled by
// 1/sqrt(fan_in); construction is reproducible from (kind, dims, seed).
struct Encoder {
  EncoderKind kind = EncoderKind::RandomLinear;
  int d_in = 0;
  int d_f = 0;
  std::uint64_t seed = 0;
  std::vector<int> layer_dims;               // [d_in, hidden..., d_f]
  std::vector<std::vector<double>> weights;  // per layer, row-major (out x in)
  std::vector<std::vector<double>> biases;   // per layer

  // Pre-normalization output; false if the result has no direction.
  bool raw_forward(std::span<const double> x, Vec& out) const;

  bool try_encode(std::span<const double> x, Vec& out) const;
  Vec encode(std::span<const double> x) const;

  // d(cotangent . encode(x))/dx, hand-coded fast path (normalization included).
  Vec encode_vjp(std::span<const double> x, std::span<const double> cotangent) const;

  // Tape forward with parameters as constants; input already on the tape.
  std::vector<ad::Var> encode_on_tape(ad::Tape& tape, std::span<const ad::Var> x) const;

  std::size_t param_count() const;
};

Encoder make_encoder(EncoderKind kind, int d_in, int d_f, std::uint64_t seed,
                     const std::vector<int>& hidden_dims = {});

struct EncoderTrainConfig {
  int epochs = 50;
  double lr = 0.05;
  double temperature = 10.0;  // cosine-softmax logit scale
};

struct EncoderTrainHistory {
  std::vector<double> loss;      // per epoch, full-batch cross-entropy
  std::vector<double> accuracy;  // per epoch, training accuracy
};

// Full-batch gradient descent on a cosine-prototype softmax loss; prototypes
// are the normalized class means of the current features, recomputed each
// epoch and treated as constants within the step. Returns the trained copy
// (kind becomes MlpTrained); epochs = 0 or lr = 0 leave parameters unchanged.
Encoder train_encoder_supervised(const Encoder& e, const LabeledDataset& data,
                                 const EncoderTrainConfig& cfg,
                                 EncoderTrainHistory* history = nullptr);

// FeatureMap adapter over a borrowed encoder.
class EncoderMap final : public FeatureMap {
 public:
  explicit EncoderMap(const Encoder& e) : e_(&e) {}

  int input_dim() const override { return e_->d_in; }
  int feature_dim() const override { return e_->d_f; }
  bool try_map(std::span<const double> x, Vec& out) const override {
    return e_->try_encode(x, out);
  }
  Vec map_vjp(std::span<const double> x, std::span<const double> cotangent) const override {
    return e_->encode_vjp(x, cotangent);
  }

 private:
  const Encoder* e_;
};

}  // namespace fscert
