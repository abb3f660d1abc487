#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fscert/autodiff.hpp"
#include "fscert/dataset.hpp"
#include "fscert/encoder.hpp"
#include "fscert/feature_map.hpp"
#include "fscert/vec.hpp"

namespace fscert {

// ---------------------------------------------------------------------------
// Denoiser: small dense residual network with a learned sigma embedding,
//   out = x + W3 gelu(W2 gelu(W1 [x; emb(sigma)] + b1) + b2) + b3,
// initialized with a zero final layer so the untrained map is the identity.
// ---------------------------------------------------------------------------

template <class S>
struct DenoiserTensors {
  std::vector<S> emb_w, emb_b;  // emb x 1, emb
  std::vector<S> w1, b1;        // hidden x (d_in + emb), hidden
  std::vector<S> w2, b2;        // hidden x hidden, hidden
  std::vector<S> w3, b3;        // d_in x hidden, d_in
};

template <class S, class F>
void visit_tensors(DenoiserTensors<S>& t, F&& f) {
  f(t.emb_w); f(t.emb_b); f(t.w1); f(t.b1); f(t.w2); f(t.b2); f(t.w3); f(t.b3);
}

struct DenoiserParams {
  int d_in = 0;
  int hidden = 32;
  int emb_dim = 4;
  DenoiserTensors<double> t;
};

DenoiserParams make_denoiser(int d_in, std::uint64_t seed, int hidden = 32, int emb_dim = 4);

// Deterministic forward pass; output finite for finite input.
Vec denoise(const DenoiserParams& p, std::span<const double> x_noisy, double sigma);

// ---------------------------------------------------------------------------
// Residual smoothness mapper: k sequential blocks. Each block layer-norms its
// input, produces a unit direction v from an MLP branch, and adds
//   dz = ((1 + gamma(sigma)) * (v * alpha(sigma) * sigma^beta_exp(sigma))
//         + beta(sigma)) * scale
// where [gamma, beta] come from a per-block FiLM generator conditioned on
// sigma, alpha/beta_exp are softplus-activated scalar heads, and scale is a
// per-channel damping vector initialized to 5e-4. At sigma = 0 the direction
// term vanishes (sigma^beta_exp = 0) and only the FiLM shift path remains,
// which the identity loss drives toward zero.
// ---------------------------------------------------------------------------

template <class S>
struct MapperBlockTensors {
  std::vector<S> ln_gain, ln_bias;      // d_f each
  std::vector<S> film_w1, film_b1;      // film_hidden x 1, film_hidden
  std::vector<S> film_w2, film_b2;      // 2 d_f x film_hidden, 2 d_f
  std::vector<S> mlp_w1, mlp_b1;        // mlp_hidden x d_f, mlp_hidden
  std::vector<S> mlp_w2, mlp_b2;        // d_f x mlp_hidden, d_f
  std::vector<S> alpha_w1, alpha_b1;    // head_hidden x 2, head_hidden
  std::vector<S> alpha_w2, alpha_b2;    // 1 x head_hidden, 1
  std::vector<S> beta_w1, beta_b1;      // head_hidden x 1, head_hidden
  std::vector<S> beta_w2, beta_b2;      // 1 x head_hidden, 1
  std::vector<S> scale;                 // d_f
};

template <class S, class F>
void visit_tensors(MapperBlockTensors<S>& t, F&& f) {
  f(t.ln_gain); f(t.ln_bias);
  f(t.film_w1); f(t.film_b1); f(t.film_w2); f(t.film_b2);
  f(t.mlp_w1); f(t.mlp_b1); f(t.mlp_w2); f(t.mlp_b2);
  f(t.alpha_w1); f(t.alpha_b1); f(t.alpha_w2); f(t.alpha_b2);
  f(t.beta_w1); f(t.beta_b1); f(t.beta_w2); f(t.beta_b2);
  f(t.scale);
}

struct MapperParams {
  int d_f = 0;
  int film_hidden = 8;
  int mlp_hidden = 16;
  int head_hidden = 8;
  std::vector<MapperBlockTensors<double>> blocks;
};

constexpr double kMapperScaleInit = 5e-4;

MapperParams make_mapper(int d_f, std::uint64_t seed, int blocks = 3, int film_hidden = 8,
                         int mlp_hidden = 16, int head_hidden = 8);

// z + sum of block residuals (not renormalized).
Vec map_feature(const MapperParams& m, std::span<const double> z, double sigma);

// Residual alone: map_feature(m, z, sigma) - z.
Vec mapper_residual(const MapperParams& m, std::span<const double> z, double sigma);

// ---------------------------------------------------------------------------
// Composite forward: feature = normalize(f_e(P(x)) + M(f_e(P(x)), sigma)).
// Either stage may be absent (nullptr): a missing denoiser is the identity,
// a missing mapper contributes no residual.
// ---------------------------------------------------------------------------

struct GsbForwardResult {
  Vec feature;          // unit norm
  double pre_norm = 0;  // norm before renormalization
};

GsbForwardResult gsb_forward(const DenoiserParams* p, const MapperParams* m, const Encoder& e,
                             std::span<const double> x_noisy, double sigma);

class GsbComposite final : public FeatureMap {
 public:
  GsbComposite(const Encoder& e, const DenoiserParams* p, const MapperParams* m, double sigma);

  int input_dim() const override;
  int feature_dim() const override;
  bool try_map(std::span<const double> x, Vec& out) const override;
  Vec map_vjp(std::span<const double> x, std::span<const double> cotangent) const override;
  Vec clean_reference(std::span<const double> x) const override;

 private:
  const Encoder* e_;
  const DenoiserParams* p_;
  const MapperParams* m_;
  double sigma_;
};

// ---------------------------------------------------------------------------
// Losses and two-stage training.
// ---------------------------------------------------------------------------

struct GsbLossWeights {
  double lambda1 = 0.25;
  double lambda2 = 100.0;
  double lambda3 = 0.25;
};

// Loss components over a batch, averaged over n0 noise draws per input.
// Stage losses follow the minimization convention: the robustness terms are
// expected cosines (larger is better), so they enter negated:
//   L_P = -l_rb_P + lambda1 * l_mse
//   L_M = -l_rb_M + lambda2 * l_stats + lambda3 * l_id
struct GsbLossReport {
  double l_mse = 0, l_rb_P = 0, L_P = 0;
  double l_rb_M = 0, l_stats = 0, l_id = 0, L_M = 0;
};

GsbLossReport compute_losses(const DenoiserParams& p, const MapperParams& m, const Encoder& e,
                             std::span<const Vec> batch, double sigma, int n0,
                             const GsbLossWeights& lambdas, std::uint64_t seed);

struct GsbTrainConfig {
  double sigma = 0.25;
  int n0 = 8;
  GsbLossWeights lambdas;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 2e-4;
  int epochs_stage1 = 30;
  int epochs_stage2 = 30;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int denoiser_hidden = 32;
  int denoiser_emb = 4;
  int mapper_blocks = 3;
  bool train_denoiser = true;  // ablation switches; an untrained stage stays
  bool train_mapper = true;    // at its (near-identity) initialization
  double holdout_fraction = 0.2;
  long holdout_eval_samples = 128;  // MC samples for the per-epoch holdout score
  int holdout_eval_inputs = 32;
};

struct GsbEpochRecord {
  int stage = 0;
  int epoch = 0;
  GsbLossReport losses;
  double holdout_score = 0.0;  // mean robustness score on held-out inputs
};

struct GsbTrainResult {
  DenoiserParams denoiser;
  MapperParams mapper;
  std::vector<GsbEpochRecord> history;
};

// Two-stage minibatch SGD: stage 1 fits the denoiser on L_P, stage 2 fits
// the mapper on L_M with the denoiser frozen. The encoder is never updated.
GsbTrainResult train_gsb(const Encoder& e, const LabeledDataset& data, const GsbTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Gradient verification.
// ---------------------------------------------------------------------------

// Scalar loss over a flat parameter vector, with an analytic gradient.
class DiffLoss {
 public:
  virtual ~DiffLoss() = default;
  virtual double value(std::span<const double> params) const = 0;
  virtual Vec gradient(std::span<const double> params) const = 0;
};

// Central finite differences (step fd_step) on up to sample_count randomly
// chosen parameters. Returns the max of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double grad_check(const DiffLoss& loss, std::span<const double> params, int sample_count,
                  double fd_step, std::uint64_t seed);

// Flat views used by training and grad_check. Layout follows visit order.
Vec flatten(const DenoiserParams& p);
void unflatten(std::span<const double> flat, DenoiserParams& p);
Vec flatten(const MapperParams& m);
void unflatten(std::span<const double> flat, MapperParams& m);

// Stage losses as DiffLoss objects over the corresponding flat parameters.
class StageOneLoss final : public DiffLoss {
 public:
  StageOneLoss(DenoiserParams shape, const Encoder& e, std::span<const Vec> batch, double sigma,
               int n0, GsbLossWeights lambdas, std::uint64_t seed);
  double value(std::span<const double> params) const override;
  Vec gradient(std::span<const double> params) const override;

 private:
  mutable DenoiserParams shape_;
  const Encoder* e_;
  std::vector<Vec> batch_;
  double sigma_;
  int n0_;
  GsbLossWeights lambdas_;
  std::uint64_t seed_;
};

class StageTwoLoss final : public DiffLoss {
 public:
  StageTwoLoss(MapperParams shape, const DenoiserParams& p, const Encoder& e,
               std::span<const Vec> batch, double sigma, int n0, GsbLossWeights lambdas,
               std::uint64_t seed);
  double value(std::span<const double> params) const override;
  Vec gradient(std::span<const double> params) const override;

 private:
  mutable MapperParams shape_;
  const DenoiserParams* p_;
  const Encoder* e_;
  std::vector<Vec> batch_;
  double sigma_;
  int n0_;
  GsbLossWeights lambdas_;
  std::uint64_t seed_;
};

}  // namespace fscert
