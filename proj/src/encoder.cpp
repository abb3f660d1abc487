#include "fscert/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fscert/rng.hpp"

namespace fscert {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::RandomLinear: return "random-linear";
    case EncoderKind::Mlp: return "mlp";
    case EncoderKind::MlpTrained: return "mlp-trained";
  }
  throw std::logic_error("to_string: bad EncoderKind");
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "random-linear") return EncoderKind::RandomLinear;
  if (s == "mlp") return EncoderKind::Mlp;
  if (s == "mlp-trained") return EncoderKind::MlpTrained;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

bool Encoder::raw_forward(std::span<const double> x, Vec& out) const {
  if (static_cast<int>(x.size()) != d_in)
    throw std::invalid_argument("Encoder: input dimension mismatch");
  const std::size_t layers = weights.size();
  Vec cur(x.begin(), x.end());
  Vec next;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = layer_dims[l];
    const int outn = layer_dims[l + 1];
    next.assign(outn, 0.0);
    const auto& w = weights[l];
    for (int j = 0; j < outn; ++j) {
      double acc = biases[l][j];
      const double* row = &w[static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) acc += row[i] * cur[i];
      next[j] = acc;
    }
    if (l + 1 < layers)
      for (double& v : next) v = std::tanh(v);
    cur.swap(next);
  }
  out = std::move(cur);
  return norm2(out) > 1e-150;
}

bool Encoder::try_encode(std::span<const double> x, Vec& out) const {
  if (!raw_forward(x, out)) return false;
  normalize(out);
  return true;
}

Vec Encoder::encode(std::span<const double> x) const {
  Vec out;
  if (!try_encode(x, out))
    throw std::domain_error("Encoder::encode: degenerate zero feature (no direction)");
  return out;
}

Vec Encoder::encode_vjp(std::span<const double> x, std::span<const double> cotangent) const {
  if (static_cast<int>(x.size()) != d_in)
    throw std::invalid_argument("Encoder::encode_vjp: input dimension mismatch");
  if (static_cast<int>(cotangent.size()) != d_f)
    throw std::invalid_argument("Encoder::encode_vjp: cotangent dimension mismatch");

  const std::size_t layers = weights.size();
  // Forward pass keeping post-activation values per layer.
  std::vector<Vec> acts(layers + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = layer_dims[l];
    const int outn = layer_dims[l + 1];
    acts[l + 1].assign(outn, 0.0);
    const auto& w = weights[l];
    for (int j = 0; j < outn; ++j) {
      double acc = biases[l][j];
      const double* row = &w[static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) acc += row[i] * acts[l][i];
      acts[l + 1][j] = l + 1 < layers ? std::tanh(acc) : acc;
    }
  }

  const Vec& y = acts[layers];
  const double n = norm2(y);
  if (!(n > 1e-150))
    throw std::domain_error("Encoder::encode_vjp: degenerate zero feature");

  // d(c . y/|y|)/dy = (c - (c.u) u) / |y|
  Vec grad(d_f);
  const double cu = dot(cotangent, y) / n;
  for (int j = 0; j < d_f; ++j) grad[j] = (cotangent[j] - cu * y[j] / n) / n;

  for (std::size_t l = layers; l-- > 0;) {
    const int in = layer_dims[l];
    const int outn = layer_dims[l + 1];
    if (l + 1 < layers)  // fold in tanh'
      for (int j = 0; j < outn; ++j) grad[j] *= 1.0 - acts[l + 1][j] * acts[l + 1][j];
    Vec prev(in, 0.0);
    const auto& w = weights[l];
    for (int j = 0; j < outn; ++j) {
      const double g = grad[j];
      const double* row = &w[static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) prev[i] += g * row[i];
    }
    grad = std::move(prev);
  }
  return grad;
}

std::vector<ad::Var> Encoder::encode_on_tape(ad::Tape& tape, std::span<const ad::Var> x) const {
  if (static_cast<int>(x.size()) != d_in)
    throw std::invalid_argument("Encoder::encode_on_tape: input dimension mismatch");
  const std::size_t layers = weights.size();
  std::vector<ad::Var> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = layer_dims[l];
    const int outn = layer_dims[l + 1];
    std::vector<ad::Var> next(outn);
    const auto& w = weights[l];
    for (int j = 0; j < outn; ++j) {
      const double* row = &w[static_cast<std::size_t>(j) * in];
      ad::Var acc = tape.mul_c(cur[0], row[0]);
      for (int i = 1; i < in; ++i) acc = acc + tape.mul_c(cur[i], row[i]);
      acc = acc + biases[l][j];
      next[j] = l + 1 < layers ? tape.tanh(acc) : acc;
    }
    cur = std::move(next);
  }
  // Normalize onto the unit sphere.
  ad::Var sq = cur[0] * cur[0];
  for (int j = 1; j < d_f; ++j) sq = sq + cur[j] * cur[j];
  if (!(tape.value(sq) > 1e-300))
    throw std::domain_error("Encoder::encode_on_tape: degenerate zero feature");
  ad::Var inv = tape.leaf(1.0) / tape.sqrt(sq);
  for (auto& v : cur) v = v * inv;
  return cur;
}

std::size_t Encoder::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Encoder make_encoder(EncoderKind kind, int d_in, int d_f, std::uint64_t seed,
                     const std::vector<int>& hidden_dims) {
  if (d_in < 1 || d_f < 1) throw std::invalid_argument("make_encoder: dims must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw std::invalid_argument("make_encoder: hidden dims must be >= 1");

  Encoder e;
  e.kind = kind;
  e.d_in = d_in;
  e.d_f = d_f;
  e.seed = seed;
  e.layer_dims.push_back(d_in);
  if (kind != EncoderKind::RandomLinear) {
    if (hidden_dims.empty())
      e.layer_dims.push_back(32);
    else
      for (int h : hidden_dims) e.layer_dims.push_back(h);
  }
  e.layer_dims.push_back(d_f);

  for (std::size_t l = 0; l + 1 < e.layer_dims.size(); ++l) {
    const int in = e.layer_dims[l];
    const int out = e.layer_dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    Rng rng(derive_seed(seed, stream::kEncoderInit, l));
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    std::vector<double> b(out);
    for (double& v : w) v = scale * (2.0 * rng.next_unit() - 1.0);
    for (double& v : b) v = scale * (2.0 * rng.next_unit() - 1.0);
    e.weights.push_back(std::move(w));
    e.biases.push_back(std::move(b));
  }
  return e;
}

namespace {

// Normalized class means of the current clean features; throws on an empty class.
std::vector<Vec> class_mean_prototypes(const Encoder& e, const LabeledDataset& data) {
  std::vector<Vec> protos(data.class_count, Vec(e.d_f, 0.0));
  std::vector<long> counts(data.class_count, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec u = e.encode(data.inputs[i]);
    axpy(1.0, u, protos[data.labels[i]]);
    ++counts[data.labels[i]];
  }
  for (int c = 0; c < data.class_count; ++c) {
    if (counts[c] == 0)
      throw std::invalid_argument("train_encoder_supervised: class without samples");
    normalize(protos[c]);
  }
  return protos;
}

}  // namespace

Encoder train_encoder_supervised(const Encoder& e, const LabeledDataset& data,
                                 const EncoderTrainConfig& cfg,
                                 EncoderTrainHistory* history) {
  if (e.kind == EncoderKind::RandomLinear)
    throw std::invalid_argument("train_encoder_supervised: encoder kind must be mlp");
  if (data.size() == 0) throw std::invalid_argument("train_encoder_supervised: empty dataset");
  for (const Vec& x : data.inputs)
    if (static_cast<int>(x.size()) != e.d_in)
      throw std::invalid_argument("train_encoder_supervised: input dimension mismatch");

  Encoder trained = e;
  if (cfg.epochs > 0) trained.kind = EncoderKind::MlpTrained;

  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<Vec> protos = class_mean_prototypes(trained, data);

    tape.clear();
    // Parameter leaves, one per weight/bias, shared across the whole batch.
    std::vector<std::vector<ad::Var>> wv(trained.weights.size());
    std::vector<std::vector<ad::Var>> bv(trained.biases.size());
    for (std::size_t l = 0; l < trained.weights.size(); ++l) {
      wv[l].reserve(trained.weights[l].size());
      for (double w : trained.weights[l]) wv[l].push_back(tape.leaf(w));
      bv[l].reserve(trained.biases[l].size());
      for (double b : trained.biases[l]) bv[l].push_back(tape.leaf(b));
    }

    ad::Var loss = tape.leaf(0.0);
    long correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
      // Forward with parameters on the tape.
      std::vector<ad::Var> cur(trained.d_in);
      for (int i = 0; i < trained.d_in; ++i) cur[i] = tape.leaf(data.inputs[s][i]);
      const std::size_t layers = trained.weights.size();
      for (std::size_t l = 0; l < layers; ++l) {
        const int in = trained.layer_dims[l];
        const int outn = trained.layer_dims[l + 1];
        std::vector<ad::Var> next(outn);
        for (int j = 0; j < outn; ++j) {
          ad::Var acc = bv[l][j];
          for (int i = 0; i < in; ++i)
            acc = acc + wv[l][static_cast<std::size_t>(j) * in + i] * cur[i];
          next[j] = l + 1 < layers ? tape.tanh(acc) : acc;
        }
        cur = std::move(next);
      }
      ad::Var sq = cur[0] * cur[0];
      for (int j = 1; j < trained.d_f; ++j) sq = sq + cur[j] * cur[j];
      ad::Var inv = tape.leaf(1.0) / tape.sqrt(sq);

      // Cosine-softmax logits against the epoch's fixed prototypes.
      std::vector<ad::Var> logits(data.class_count);
      for (int c = 0; c < data.class_count; ++c) {
        ad::Var d = cur[0] * protos[c][0];
        for (int j = 1; j < trained.d_f; ++j) d = d + cur[j] * protos[c][j];
        logits[c] = tape.mul_c(d * inv, cfg.temperature);
      }
      double max_logit = tape.value(logits[0]);
      int argmax = 0;
      for (int c = 1; c < data.class_count; ++c)
        if (tape.value(logits[c]) > max_logit) {
          max_logit = tape.value(logits[c]);
          argmax = c;
        }
      if (argmax == data.labels[s]) ++correct;

      ad::Var sum_exp = tape.exp(logits[0] - max_logit);
      for (int c = 1; c < data.class_count; ++c)
        sum_exp = sum_exp + tape.exp(logits[c] - max_logit);
      ad::Var log_prob = logits[data.labels[s]] - max_logit - tape.log(sum_exp);
      loss = loss - log_prob;
    }
    loss = loss / static_cast<double>(data.size());

    if (!std::isfinite(tape.value(loss)))
      throw std::runtime_error("train_encoder_supervised: loss diverged (non-finite)");
    if (history) {
      history->loss.push_back(tape.value(loss));
      history->accuracy.push_back(static_cast<double>(correct) /
                                  static_cast<double>(data.size()));
    }

    tape.backward(loss);
    for (std::size_t l = 0; l < trained.weights.size(); ++l) {
      for (std::size_t i = 0; i < trained.weights[l].size(); ++i)
        trained.weights[l][i] -= cfg.lr * tape.grad(wv[l][i]);
      for (std::size_t i = 0; i < trained.biases[l].size(); ++i)
        trained.biases[l][i] -= cfg.lr * tape.grad(bv[l][i]);
    }
  }
  return trained;
}

}  // namespace fscert
