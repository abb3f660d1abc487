#include "fscert/gsb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>

#include "fscert/rng.hpp"
#include "fscert/smoothing.hpp"

namespace fscert {

namespace {

using ad::Tape;
using ad::Var;

template <class A, class B>
using common_t =
    std::conditional_t<std::is_same_v<A, Var> || std::is_same_v<B, Var>, Var, double>;

template <class SC, class SP>
SC lift(Tape* tape, SP v) {
  if constexpr (std::is_same_v<SP, SC>)
    return v;
  else
    return ad::Scalar<SC>::constant(tape, v);
}

// y = W x + b with W row-major (out x in); parameter and data scalar types
// may differ (mixed products resolve through the Var operator overloads).
template <class SP, class SX>
std::vector<common_t<SP, SX>> linear(Tape* tape, std::span<const SP> w, std::span<const SP> b,
                                     std::span<const SX> x, int out_dim, int in_dim) {
  using SC = common_t<SP, SX>;
  std::vector<SC> y(out_dim);
  for (int j = 0; j < out_dim; ++j) {
    SC acc = lift<SC>(tape, b[j]);
    for (int i = 0; i < in_dim; ++i) acc = acc + w[static_cast<std::size_t>(j) * in_dim + i] * x[i];
    y[j] = acc;
  }
  return y;
}

template <class S>
void gelu_all(std::vector<S>& v) {
  for (S& x : v) x = ad::Scalar<S>::gelu(x);
}

template <class SP, class SD>
std::vector<common_t<SP, SD>> denoiser_forward_t(Tape* tape, const DenoiserTensors<SP>& t,
                                                 int d_in, int hidden, int emb_dim,
                                                 std::span<const SD> x, double sigma) {
  using SC = common_t<SP, SD>;
  // Sigma embedding involves parameters only.
  std::vector<SP> emb(emb_dim);
  for (int j = 0; j < emb_dim; ++j)
    emb[j] = ad::Scalar<SP>::gelu(t.emb_w[j] * sigma + t.emb_b[j]);

  std::vector<SC> in(d_in + emb_dim);
  for (int i = 0; i < d_in; ++i) in[i] = lift<SC>(tape, x[i]);
  for (int j = 0; j < emb_dim; ++j) in[d_in + j] = lift<SC>(tape, emb[j]);

  auto h1 = linear<SP, SC>(tape, t.w1, t.b1, in, hidden, d_in + emb_dim);
  gelu_all(h1);
  auto h2 = linear<SP, SC>(tape, t.w2, t.b2, h1, hidden, hidden);
  gelu_all(h2);
  auto res = linear<SP, SC>(tape, t.w3, t.b3, h2, d_in, hidden);
  std::vector<SC> out(d_in);
  for (int i = 0; i < d_in; ++i) out[i] = x[i] + res[i];
  return out;
}

template <class SP, class SD>
std::vector<common_t<SP, SD>> mapper_forward_t(Tape* tape, const MapperParams& dims,
                                               std::span<const MapperBlockTensors<SP>> blocks,
                                               std::span<const SD> z, double sigma) {
  using SC = common_t<SP, SD>;
  using Ops = ad::Scalar<SC>;
  using POps = ad::Scalar<SP>;
  const int d = dims.d_f;

  std::vector<SC> cur(d);
  for (int i = 0; i < d; ++i) cur[i] = lift<SC>(tape, z[i]);

  for (const MapperBlockTensors<SP>& blk : blocks) {
    // LayerNorm over channels.
    SC mean = cur[0];
    for (int i = 1; i < d; ++i) mean = mean + cur[i];
    mean = mean * (1.0 / d);
    SC var = (cur[0] - mean) * (cur[0] - mean);
    for (int i = 1; i < d; ++i) var = var + (cur[i] - mean) * (cur[i] - mean);
    var = var * (1.0 / d);
    SC inv_std = lift<SC>(tape, 1.0) / Ops::sqrt(var + 1e-5);
    std::vector<SC> zn(d);
    for (int i = 0; i < d; ++i) zn[i] = (cur[i] - mean) * inv_std * blk.ln_gain[i] + blk.ln_bias[i];

    // FiLM(sigma) -> per-channel [gamma, beta]; parameters only.
    std::vector<SP> fh(dims.film_hidden);
    for (int j = 0; j < dims.film_hidden; ++j)
      fh[j] = POps::gelu(blk.film_w1[j] * sigma + blk.film_b1[j]);
    auto film = linear<SP, SP>(tape, blk.film_w2, blk.film_b2, std::span<const SP>(fh), 2 * d,
                               dims.film_hidden);

    // MLP branch produces the refinement direction.
    auto h = linear<SP, SC>(tape, blk.mlp_w1, blk.mlp_b1, std::span<const SC>(zn),
                            dims.mlp_hidden, d);
    gelu_all(h);
    auto dir = linear<SP, SC>(tape, blk.mlp_w2, blk.mlp_b2, std::span<const SC>(h), d,
                              dims.mlp_hidden);
    SC dir_sq = dir[0] * dir[0];
    for (int i = 1; i < d; ++i) dir_sq = dir_sq + dir[i] * dir[i];
    SC inv_dir = lift<SC>(tape, 1.0) / Ops::sqrt(dir_sq + 1e-30);

    if (sigma > 0.0) {
      // Scalar amplitude and exponent heads; sigma^beta_exp via exp(log).
      std::vector<SP> ah(dims.head_hidden);
      const double log_sigma = std::log(sigma);
      for (int j = 0; j < dims.head_hidden; ++j)
        ah[j] = POps::gelu(blk.alpha_w1[static_cast<std::size_t>(j) * 2] * sigma +
                           blk.alpha_w1[static_cast<std::size_t>(j) * 2 + 1] * log_sigma +
                           blk.alpha_b1[j]);
      SP amp_pre = blk.alpha_b2[0];
      for (int j = 0; j < dims.head_hidden; ++j) amp_pre = amp_pre + blk.alpha_w2[j] * ah[j];
      SP amp = POps::softplus(amp_pre);

      std::vector<SP> bh(dims.head_hidden);
      for (int j = 0; j < dims.head_hidden; ++j)
        bh[j] = POps::gelu(blk.beta_w1[j] * sigma + blk.beta_b1[j]);
      SP expo_pre = blk.beta_b2[0];
      for (int j = 0; j < dims.head_hidden; ++j) expo_pre = expo_pre + blk.beta_w2[j] * bh[j];
      SP sig_pow = POps::exp(POps::softplus(expo_pre) * log_sigma);

      for (int i = 0; i < d; ++i) {
        SC direction = dir[i] * inv_dir * amp * sig_pow;
        SC dz = ((1.0 + film[i]) * direction + film[d + i]) * blk.scale[i];
        cur[i] = cur[i] + dz;
      }
    } else {
      // sigma = 0: sigma^beta_exp vanishes, only the FiLM shift path remains.
      for (int i = 0; i < d; ++i) cur[i] = cur[i] + film[d + i] * blk.scale[i];
    }
  }
  return cur;
}

std::vector<Var> encoder_forward_on_tape(Tape& tape, const Encoder& e, std::span<const Var> x) {
  return e.encode_on_tape(tape, x);
}

Vec to_double_vec(const std::vector<double>& v) { return v; }

void fill_uniform(std::vector<double>& v, Rng& rng, double scale) {
  for (double& x : v) x = scale * (2.0 * rng.next_unit() - 1.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction / plain forwards
// ---------------------------------------------------------------------------

DenoiserParams make_denoiser(int d_in, std::uint64_t seed, int hidden, int emb_dim) {
  if (d_in < 1 || hidden < 1 || emb_dim < 1)
    throw std::invalid_argument("make_denoiser: dims must be >= 1");
  DenoiserParams p;
  p.d_in = d_in;
  p.hidden = hidden;
  p.emb_dim = emb_dim;
  auto& t = p.t;
  t.emb_w.assign(emb_dim, 0.0);
  t.emb_b.assign(emb_dim, 0.0);
  t.w1.assign(static_cast<std::size_t>(hidden) * (d_in + emb_dim), 0.0);
  t.b1.assign(hidden, 0.0);
  t.w2.assign(static_cast<std::size_t>(hidden) * hidden, 0.0);
  t.b2.assign(hidden, 0.0);
  t.w3.assign(static_cast<std::size_t>(d_in) * hidden, 0.0);
  t.b3.assign(d_in, 0.0);

  int idx = 0;
  auto init = [&](std::vector<double>& v, int fan_in) {
    Rng rng(derive_seed(seed, stream::kGsbInit, static_cast<std::uint64_t>(idx++)));
    fill_uniform(v, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  };
  init(t.emb_w, 1);
  init(t.emb_b, 1);
  init(t.w1, d_in + emb_dim);
  init(t.b1, d_in + emb_dim);
  init(t.w2, hidden);
  init(t.b2, hidden);
  // Zero final layer: the untrained denoiser is the identity map.
  std::fill(t.w3.begin(), t.w3.end(), 0.0);
  std::fill(t.b3.begin(), t.b3.end(), 0.0);
  return p;
}

Vec denoise(const DenoiserParams& p, std::span<const double> x_noisy, double sigma) {
  if (static_cast<int>(x_noisy.size()) != p.d_in)
    throw std::invalid_argument("denoise: input dimension mismatch");
  if (!(sigma >= 0.0)) throw std::invalid_argument("denoise: sigma must be >= 0");
  return to_double_vec(denoiser_forward_t<double, double>(nullptr, p.t, p.d_in, p.hidden,
                                                          p.emb_dim, x_noisy, sigma));
}

MapperParams make_mapper(int d_f, std::uint64_t seed, int blocks, int film_hidden, int mlp_hidden,
                         int head_hidden) {
  if (d_f < 1 || blocks < 1 || film_hidden < 1 || mlp_hidden < 1 || head_hidden < 1)
    throw std::invalid_argument("make_mapper: dims must be >= 1");
  MapperParams m;
  m.d_f = d_f;
  m.film_hidden = film_hidden;
  m.mlp_hidden = mlp_hidden;
  m.head_hidden = head_hidden;
  m.blocks.resize(blocks);

  int idx = 1000;  // distinct stream offsets from the denoiser
  for (MapperBlockTensors<double>& b : m.blocks) {
    auto sized = [](std::vector<double>& v, std::size_t n) { v.assign(n, 0.0); };
    sized(b.ln_gain, d_f);
    sized(b.ln_bias, d_f);
    sized(b.film_w1, film_hidden);
    sized(b.film_b1, film_hidden);
    sized(b.film_w2, static_cast<std::size_t>(2 * d_f) * film_hidden);
    sized(b.film_b2, 2 * d_f);
    sized(b.mlp_w1, static_cast<std::size_t>(mlp_hidden) * d_f);
    sized(b.mlp_b1, mlp_hidden);
    sized(b.mlp_w2, static_cast<std::size_t>(d_f) * mlp_hidden);
    sized(b.mlp_b2, d_f);
    sized(b.alpha_w1, static_cast<std::size_t>(head_hidden) * 2);
    sized(b.alpha_b1, head_hidden);
    sized(b.alpha_w2, head_hidden);
    sized(b.alpha_b2, 1);
    sized(b.beta_w1, head_hidden);
    sized(b.beta_b1, head_hidden);
    sized(b.beta_w2, head_hidden);
    sized(b.beta_b2, 1);
    sized(b.scale, d_f);

    auto init = [&](std::vector<double>& v, int fan_in) {
      Rng rng(derive_seed(seed, stream::kGsbInit, static_cast<std::uint64_t>(idx++)));
      fill_uniform(v, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    };
    init(b.film_w1, 1);
    init(b.film_b1, 1);
    init(b.film_w2, film_hidden);
    init(b.mlp_w1, d_f);
    init(b.mlp_b1, d_f);
    init(b.mlp_w2, mlp_hidden);
    init(b.mlp_b2, mlp_hidden);
    init(b.alpha_w1, 2);
    init(b.alpha_b1, 2);
    init(b.alpha_w2, head_hidden);
    init(b.alpha_b2, head_hidden);
    init(b.beta_w1, 1);
    init(b.beta_b1, 1);
    init(b.beta_w2, head_hidden);
    init(b.beta_b2, head_hidden);
    std::fill(b.ln_gain.begin(), b.ln_gain.end(), 1.0);
    std::fill(b.ln_bias.begin(), b.ln_bias.end(), 0.0);
    std::fill(b.film_b2.begin(), b.film_b2.end(), 0.0);
    std::fill(b.scale.begin(), b.scale.end(), kMapperScaleInit);
  }
  return m;
}

Vec map_feature(const MapperParams& m, std::span<const double> z, double sigma) {
  if (static_cast<int>(z.size()) != m.d_f)
    throw std::invalid_argument("map_feature: feature dimension mismatch");
  if (!(sigma >= 0.0)) throw std::invalid_argument("map_feature: sigma must be >= 0");
  return to_double_vec(mapper_forward_t<double, double>(
      nullptr, m, std::span<const MapperBlockTensors<double>>(m.blocks), z, sigma));
}

Vec mapper_residual(const MapperParams& m, std::span<const double> z, double sigma) {
  Vec out = map_feature(m, z, sigma);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= z[i];
  return out;
}

GsbForwardResult gsb_forward(const DenoiserParams* p, const MapperParams* m, const Encoder& e,
                             std::span<const double> x_noisy, double sigma) {
  Vec den;
  std::span<const double> enc_in = x_noisy;
  if (p != nullptr) {
    den = denoise(*p, x_noisy, sigma);
    enc_in = den;
  }
  Vec feat = e.encode(enc_in);
  if (m != nullptr) feat = map_feature(*m, feat, sigma);
  GsbForwardResult out;
  out.pre_norm = norm2(feat);
  if (!(out.pre_norm > 1e-150))
    throw std::domain_error("gsb_forward: degenerate zero feature (no direction)");
  out.feature = std::move(feat);
  normalize(out.feature);
  return out;
}

GsbComposite::GsbComposite(const Encoder& e, const DenoiserParams* p, const MapperParams* m,
                           double sigma)
    : e_(&e), p_(p), m_(m), sigma_(sigma) {
  if (p_ && p_->d_in != e.d_in) throw std::invalid_argument("GsbComposite: denoiser dim mismatch");
  if (m_ && m_->d_f != e.d_f) throw std::invalid_argument("GsbComposite: mapper dim mismatch");
  if (!(sigma >= 0.0)) throw std::invalid_argument("GsbComposite: sigma must be >= 0");
}

int GsbComposite::input_dim() const { return e_->d_in; }
int GsbComposite::feature_dim() const { return e_->d_f; }

bool GsbComposite::try_map(std::span<const double> x, Vec& out) const {
  Vec den;
  std::span<const double> enc_in = x;
  if (p_ != nullptr) {
    den = denoise(*p_, x, sigma_);
    enc_in = den;
  }
  Vec feat;
  if (!e_->try_encode(enc_in, feat)) return false;
  if (m_ != nullptr) feat = map_feature(*m_, feat, sigma_);
  const double n = norm2(feat);
  if (!(n > 1e-150)) return false;
  out = std::move(feat);
  for (double& v : out) v /= n;
  return true;
}

Vec GsbComposite::map_vjp(std::span<const double> x, std::span<const double> cotangent) const {
  if (static_cast<int>(x.size()) != e_->d_in)
    throw std::invalid_argument("GsbComposite::map_vjp: input dimension mismatch");
  Tape tape;
  std::vector<Var> xv(e_->d_in);
  for (int i = 0; i < e_->d_in; ++i) xv[i] = tape.leaf(x[i]);

  std::vector<Var> cur(xv);
  if (p_ != nullptr)
    cur = denoiser_forward_t<double, Var>(&tape, p_->t, p_->d_in, p_->hidden, p_->emb_dim,
                                          std::span<const Var>(cur), sigma_);
  cur = encoder_forward_on_tape(tape, *e_, cur);
  if (m_ != nullptr)
    cur = mapper_forward_t<double, Var>(
        &tape, *m_, std::span<const MapperBlockTensors<double>>(m_->blocks),
        std::span<const Var>(cur), sigma_);

  // Normalize, then contract with the cotangent.
  Var sq = cur[0] * cur[0];
  for (int j = 1; j < e_->d_f; ++j) sq = sq + cur[j] * cur[j];
  if (!(tape.value(sq) > 1e-300))
    throw std::domain_error("GsbComposite::map_vjp: degenerate zero feature");
  Var inv = tape.leaf(1.0) / tape.sqrt(sq);
  Var s = cur[0] * inv * cotangent[0];
  for (int j = 1; j < e_->d_f; ++j) s = s + cur[j] * inv * cotangent[j];

  tape.backward(s);
  Vec grad(e_->d_in);
  for (int i = 0; i < e_->d_in; ++i) grad[i] = tape.grad(xv[i]);
  return grad;
}

Vec GsbComposite::clean_reference(std::span<const double> x) const { return e_->encode(x); }

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

struct NoiseDraw {
  std::uint64_t seed;
};

Vec draw_noise(std::uint64_t seed, int d, double sigma) {
  Vec eps(d, 0.0);
  if (sigma > 0.0) {
    Rng rng(seed);
    rng.fill_normal(eps, sigma);
  }
  return eps;
}

std::uint64_t loss_draw_seed(std::uint64_t seed, std::size_t sample, int draw) {
  return derive_seed(derive_seed(seed, stream::kGsbNoise, sample), 0, draw);
}

// Stage-1 terms over a batch: mean reconstruction error and mean cosine
// between purified and clean features. SP = double evaluates, SP = Var
// builds the differentiable graph (encoder parameters stay constant).
template <class SP>
struct Stage1Terms {
  SP l_mse;
  SP l_rb;
};

template <class SP>
Stage1Terms<SP> stage1_terms(Tape* tape, const DenoiserTensors<SP>& dt, const DenoiserParams& dims,
                             const Encoder& e, std::span<const Vec> batch, double sigma, int n0,
                             std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("stage1_terms: empty batch");
  if (n0 < 1) throw std::invalid_argument("stage1_terms: n0 must be >= 1");

  SP mse_acc = lift<SP>(tape, 0.0);
  SP rb_acc = lift<SP>(tape, 0.0);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Vec& x = batch[j];
    const Vec z_clean = e.encode(x);
    for (int i = 0; i < n0; ++i) {
      const Vec eps = draw_noise(loss_draw_seed(seed, j, i), dims.d_in, sigma);
      const Vec x_noisy = add(x, eps);
      auto xden = denoiser_forward_t<SP, double>(tape, dt, dims.d_in, dims.hidden, dims.emb_dim,
                                                 std::span<const double>(x_noisy), sigma);
      // || x - P(x + eps) ||^2
      SP err = (x[0] - xden[0]) * (x[0] - xden[0]);
      for (int d = 1; d < dims.d_in; ++d) err = err + (x[d] - xden[d]) * (x[d] - xden[d]);
      mse_acc = mse_acc + err;

      // Cos(f_e(P(x + eps)), f_e(x)); encoder output is unit norm.
      if constexpr (std::is_same_v<SP, Var>) {
        std::vector<Var> zt = e.encode_on_tape(*tape, std::span<const Var>(xden));
        Var c = zt[0] * z_clean[0];
        for (int d = 1; d < e.d_f; ++d) c = c + zt[d] * z_clean[d];
        rb_acc = rb_acc + c;
      } else {
        Vec zt = e.encode(xden);
        rb_acc = rb_acc + dot(zt, z_clean);
      }
    }
  }
  const double inv_count = 1.0 / (static_cast<double>(batch.size()) * n0);
  return Stage1Terms<SP>{mse_acc * inv_count, rb_acc * inv_count};
}

template <class SP>
struct Stage2Terms {
  SP l_rb;
  SP l_stats;
  SP l_id;
};

// Stage-2 terms: the denoiser and encoder are frozen, so purified features
// are precomputed as constants and only the mapper sits on the tape.
template <class SP>
Stage2Terms<SP> stage2_terms(Tape* tape, std::span<const MapperBlockTensors<SP>> mt,
                             const MapperParams& dims, const DenoiserParams* p, const Encoder& e,
                             std::span<const Vec> batch, double sigma, int n0,
                             std::uint64_t seed) {
  const std::size_t bsz = batch.size();
  if (bsz < 2) throw std::invalid_argument("stage2_terms: batch size < 2 (std undefined)");
  if (n0 < 1) throw std::invalid_argument("stage2_terms: n0 must be >= 1");
  const int d = dims.d_f;

  // Clean features and their per-dimension batch statistics (constants).
  std::vector<Vec> z_clean(bsz);
  for (std::size_t j = 0; j < bsz; ++j) z_clean[j] = e.encode(batch[j]);
  Vec clean_mean(d, 0.0), clean_std(d, 0.0);
  for (std::size_t j = 0; j < bsz; ++j)
    for (int k = 0; k < d; ++k) clean_mean[k] += z_clean[j][k];
  for (int k = 0; k < d; ++k) clean_mean[k] /= static_cast<double>(bsz);
  for (std::size_t j = 0; j < bsz; ++j)
    for (int k = 0; k < d; ++k) {
      const double dv = z_clean[j][k] - clean_mean[k];
      clean_std[k] += dv * dv;
    }
  for (int k = 0; k < d; ++k)
    clean_std[k] = std::sqrt(clean_std[k] / static_cast<double>(bsz) + 1e-12);

  auto purified = [&](std::span<const double> x, double sig) {
    if (p != nullptr) return e.encode(denoise(*p, x, sig));
    return e.encode(x);
  };

  SP rb_acc = lift<SP>(tape, 0.0);
  SP stats_acc = lift<SP>(tape, 0.0);
  for (int i = 0; i < n0; ++i) {
    std::vector<std::vector<SP>> zm(bsz);
    for (std::size_t j = 0; j < bsz; ++j) {
      const Vec eps = draw_noise(loss_draw_seed(seed, j, i), e.d_in, sigma);
      const Vec zt = purified(add(batch[j], eps), sigma);
      zm[j] = mapper_forward_t<SP, double>(tape, dims, mt, std::span<const double>(zt), sigma);

      // Cos(zm, z_clean); zm is not unit norm.
      SP sq = zm[j][0] * zm[j][0];
      for (int k = 1; k < d; ++k) sq = sq + zm[j][k] * zm[j][k];
      SP num = zm[j][0] * z_clean[j][0];
      for (int k = 1; k < d; ++k) num = num + zm[j][k] * z_clean[j][k];
      rb_acc = rb_acc + num / ad::Scalar<SP>::sqrt(sq + 1e-30);
    }

    // Per-dimension batch mean/std gap against the clean statistics.
    SP draw_stats = lift<SP>(tape, 0.0);
    for (int k = 0; k < d; ++k) {
      SP mu = zm[0][k];
      for (std::size_t j = 1; j < bsz; ++j) mu = mu + zm[j][k];
      mu = mu * (1.0 / static_cast<double>(bsz));
      SP var = (zm[0][k] - mu) * (zm[0][k] - mu);
      for (std::size_t j = 1; j < bsz; ++j) var = var + (zm[j][k] - mu) * (zm[j][k] - mu);
      var = var * (1.0 / static_cast<double>(bsz));
      SP sd = ad::Scalar<SP>::sqrt(var + 1e-12);
      SP dmu = mu - clean_mean[k];
      SP dsd = sd - clean_std[k];
      draw_stats = draw_stats + dmu * dmu + dsd * dsd;
    }
    stats_acc = stats_acc + draw_stats * (1.0 / d);
  }

  // Identity loss: mapper response at sigma = 0 on noise-free purified features.
  SP id_acc = lift<SP>(tape, 0.0);
  for (std::size_t j = 0; j < bsz; ++j) {
    const Vec zt = purified(batch[j], 0.0);
    auto z0 = mapper_forward_t<SP, double>(tape, dims, mt, std::span<const double>(zt), 0.0);
    SP r = (z0[0] - zt[0]) * (z0[0] - zt[0]);
    for (int k = 1; k < d; ++k) r = r + (z0[k] - zt[k]) * (z0[k] - zt[k]);
    id_acc = id_acc + r;
  }

  const double inv_draws = 1.0 / (static_cast<double>(bsz) * n0);
  return Stage2Terms<SP>{rb_acc * inv_draws, stats_acc * (1.0 / n0),
                         id_acc * (1.0 / static_cast<double>(bsz))};
}

}  // namespace

GsbLossReport compute_losses(const DenoiserParams& p, const MapperParams& m, const Encoder& e,
                             std::span<const Vec> batch, double sigma, int n0,
                             const GsbLossWeights& lambdas, std::uint64_t seed) {
  const auto s1 = stage1_terms<double>(nullptr, p.t, p, e, batch, sigma, n0, seed);
  const auto s2 = stage2_terms<double>(nullptr, std::span<const MapperBlockTensors<double>>(m.blocks),
                                       m, &p, e, batch, sigma, n0, seed);
  GsbLossReport rep;
  rep.l_mse = s1.l_mse;
  rep.l_rb_P = s1.l_rb;
  rep.L_P = -s1.l_rb + lambdas.lambda1 * s1.l_mse;
  rep.l_rb_M = s2.l_rb;
  rep.l_stats = s2.l_stats;
  rep.l_id = s2.l_id;
  rep.L_M = -s2.l_rb + lambdas.lambda2 * s2.l_stats + lambdas.lambda3 * s2.l_id;
  return rep;
}

// ---------------------------------------------------------------------------
// Flat parameter views
// ---------------------------------------------------------------------------

namespace {

template <class P>
Vec flatten_impl(const P& params) {
  Vec out;
  visit_tensors(const_cast<P&>(params), [&](auto& t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

}  // namespace

Vec flatten(const DenoiserParams& p) { return flatten_impl(p.t); }

void unflatten(std::span<const double> flat, DenoiserParams& p) {
  std::size_t pos = 0;
  visit_tensors(p.t, [&](auto& t) {
    if (pos + t.size() > flat.size()) throw std::invalid_argument("unflatten: size mismatch");
    std::copy(flat.begin() + pos, flat.begin() + pos + t.size(), t.begin());
    pos += t.size();
  });
  if (pos != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

Vec flatten(const MapperParams& m) {
  Vec out;
  for (const auto& blk : m.blocks) {
    Vec part = flatten_impl(blk);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void unflatten(std::span<const double> flat, MapperParams& m) {
  std::size_t pos = 0;
  for (auto& blk : m.blocks) {
    visit_tensors(blk, [&](auto& t) {
      if (pos + t.size() > flat.size()) throw std::invalid_argument("unflatten: size mismatch");
      std::copy(flat.begin() + pos, flat.begin() + pos + t.size(), t.begin());
      pos += t.size();
    });
  }
  if (pos != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

namespace {

// Binds every tensor of a parameter struct to tape leaves (visit order).
template <class TensorsT>
auto bind_leaves(Tape& tape, const TensorsT& src) {
  using VarTensors = std::conditional_t<std::is_same_v<TensorsT, DenoiserTensors<double>>,
                                        DenoiserTensors<Var>, MapperBlockTensors<Var>>;
  VarTensors out;
  auto* src_mut = const_cast<TensorsT*>(&src);
  std::vector<std::vector<Var>*> dst_slots;
  visit_tensors(out, [&](auto& t) { dst_slots.push_back(&t); });
  std::size_t slot = 0;
  visit_tensors(*src_mut, [&](auto& t) {
    auto& dst = *dst_slots[slot++];
    dst.reserve(t.size());
    for (double v : t) dst.push_back(tape.leaf(v));
  });
  return out;
}

template <class VarTensors>
void apply_sgd(Tape& tape, const VarTensors& leaves, auto& tensors, double lr) {
  std::vector<const std::vector<Var>*> var_slots;
  visit_tensors(const_cast<VarTensors&>(leaves), [&](auto& t) { var_slots.push_back(&t); });
  std::size_t slot = 0;
  visit_tensors(tensors, [&](auto& t) {
    const auto& vars = *var_slots[slot++];
    for (std::size_t i = 0; i < t.size(); ++i) t[i] -= lr * tape.grad(vars[i]);
  });
}

double holdout_mean_score(const FeatureMap& map, std::span<const Vec> inputs, double sigma,
                          long n_samples, int max_inputs) {
  const int count = std::min<int>(max_inputs, static_cast<int>(inputs.size()));
  if (count == 0) return 0.0;
  double acc = 0.0;
  SmoothingConfig cfg;
  cfg.noise = gauss::NoiseSpec{sigma};
  cfg.n_samples = n_samples;
  cfg.mode = ScoreMode::PointEstimate;
  cfg.base_seed = 0x65766c73ULL;
  for (int i = 0; i < count; ++i)
    acc += estimate_score(map, inputs[i], cfg, static_cast<std::uint64_t>(i)).mean_score.value;
  return acc / count;
}

}  // namespace

GsbTrainResult train_gsb(const Encoder& e, const LabeledDataset& data, const GsbTrainConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("train_gsb: empty dataset");
  if (cfg.n0 < 1) throw std::invalid_argument("train_gsb: n0 must be >= 1");
  if (cfg.batch_size < 2) throw std::invalid_argument("train_gsb: batch_size must be >= 2");

  GsbTrainResult result;
  result.denoiser = make_denoiser(e.d_in, derive_seed(cfg.seed, stream::kGsbInit, 1),
                                  cfg.denoiser_hidden, cfg.denoiser_emb);
  result.mapper = make_mapper(e.d_f, derive_seed(cfg.seed, stream::kGsbInit, 2), cfg.mapper_blocks);

  auto [train, holdout] = split_dataset(data, 1.0 - cfg.holdout_fraction);
  if (train.size() < static_cast<std::size_t>(cfg.batch_size))
    throw std::invalid_argument("train_gsb: training split smaller than one batch");
  const std::vector<Vec>& tx = train.inputs;
  const std::span<const Vec> holdout_inputs(holdout.inputs.empty() ? train.inputs
                                                                   : holdout.inputs);

  auto record_epoch = [&](int stage, int epoch) {
    GsbEpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    const std::size_t eval_count = std::min<std::size_t>(tx.size(), 32);
    rec.losses = compute_losses(result.denoiser, result.mapper, e,
                                std::span<const Vec>(tx.data(), eval_count), cfg.sigma, cfg.n0,
                                cfg.lambdas, derive_seed(cfg.seed, 0x6c6f7373ULL, epoch));
    const GsbComposite composite(e, cfg.train_denoiser && stage >= 1 ? &result.denoiser : nullptr,
                                 cfg.train_mapper && stage >= 2 ? &result.mapper : nullptr,
                                 cfg.sigma);
    rec.holdout_score = holdout_mean_score(composite, holdout_inputs, cfg.sigma,
                                           cfg.holdout_eval_samples, cfg.holdout_eval_inputs);
    result.history.push_back(rec);
  };

  Tape tape;
  const std::size_t n_batches = tx.size() / cfg.batch_size;

  if (cfg.train_denoiser) {
    for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
      for (std::size_t b = 0; b < n_batches; ++b) {
        tape.clear();
        const auto leaves = bind_leaves(tape, result.denoiser.t);
        const std::span<const Vec> batch(tx.data() + b * cfg.batch_size, cfg.batch_size);
        const std::uint64_t noise_seed =
            derive_seed(derive_seed(cfg.seed, stream::kGsbNoise, 1), epoch, b);
        const auto terms = stage1_terms<Var>(&tape, leaves, result.denoiser, e, batch, cfg.sigma,
                                             cfg.n0, noise_seed);
        Var loss = terms.l_mse * cfg.lambdas.lambda1 - terms.l_rb;
        if (!std::isfinite(tape.value(loss)))
          throw std::runtime_error("train_gsb: stage-1 loss diverged (non-finite)");
        tape.backward(loss);
        apply_sgd(tape, leaves, result.denoiser.t, cfg.lr_stage1);
      }
      record_epoch(1, epoch);
    }
  }

  if (cfg.train_mapper) {
    const DenoiserParams* frozen_p = cfg.train_denoiser ? &result.denoiser : nullptr;
    for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
      for (std::size_t b = 0; b < n_batches; ++b) {
        tape.clear();
        std::vector<MapperBlockTensors<Var>> leaves;
        leaves.reserve(result.mapper.blocks.size());
        for (const auto& blk : result.mapper.blocks) leaves.push_back(bind_leaves(tape, blk));
        const std::span<const Vec> batch(tx.data() + b * cfg.batch_size, cfg.batch_size);
        const std::uint64_t noise_seed =
            derive_seed(derive_seed(cfg.seed, stream::kGsbNoise, 2), epoch, b);
        const auto terms = stage2_terms<Var>(
            &tape, std::span<const MapperBlockTensors<Var>>(leaves), result.mapper, frozen_p, e,
            batch, cfg.sigma, cfg.n0, noise_seed);
        Var loss =
            terms.l_stats * cfg.lambdas.lambda2 + terms.l_id * cfg.lambdas.lambda3 - terms.l_rb;
        if (!std::isfinite(tape.value(loss)))
          throw std::runtime_error("train_gsb: stage-2 loss diverged (non-finite)");
        tape.backward(loss);
        std::size_t blk_idx = 0;
        for (auto& blk : result.mapper.blocks) apply_sgd(tape, leaves[blk_idx++], blk, cfg.lr_stage2);
      }
      record_epoch(2, epoch);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

double grad_check(const DiffLoss& loss, std::span<const double> params, int sample_count,
                  double fd_step, std::uint64_t seed) {
  if (params.empty()) throw std::invalid_argument("grad_check: empty parameter vector");
  const Vec analytic = loss.gradient(params);
  if (analytic.size() != params.size())
    throw std::logic_error("grad_check: gradient size mismatch");

  // Sample without replacement when the parameter vector is small enough.
  std::vector<std::size_t> indices;
  if (static_cast<std::size_t>(sample_count) >= params.size()) {
    indices.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) indices[i] = i;
  } else {
    Rng rng(derive_seed(seed, 0x67636b73ULL, 0));
    std::vector<bool> taken(params.size(), false);
    while (indices.size() < static_cast<std::size_t>(sample_count)) {
      const std::size_t i = rng.next_u64() % params.size();
      if (!taken[i]) {
        taken[i] = true;
        indices.push_back(i);
      }
    }
  }

  Vec work(params.begin(), params.end());
  double max_rel = 0.0;
  for (std::size_t i : indices) {
    const double orig = work[i];
    work[i] = orig + fd_step;
    const double up = loss.value(work);
    work[i] = orig - fd_step;
    const double down = loss.value(work);
    work[i] = orig;
    const double fd = (up - down) / (2.0 * fd_step);
    const double rel = std::abs(analytic[i] - fd) /
                       std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

StageOneLoss::StageOneLoss(DenoiserParams shape, const Encoder& e, std::span<const Vec> batch,
                           double sigma, int n0, GsbLossWeights lambdas, std::uint64_t seed)
    : shape_(std::move(shape)),
      e_(&e),
      batch_(batch.begin(), batch.end()),
      sigma_(sigma),
      n0_(n0),
      lambdas_(lambdas),
      seed_(seed) {}

double StageOneLoss::value(std::span<const double> params) const {
  DenoiserParams p = shape_;
  unflatten(params, p);
  const auto terms = stage1_terms<double>(nullptr, p.t, p, *e_, batch_, sigma_, n0_, seed_);
  return -terms.l_rb + lambdas_.lambda1 * terms.l_mse;
}

Vec StageOneLoss::gradient(std::span<const double> params) const {
  DenoiserParams p = shape_;
  unflatten(params, p);
  Tape tape;
  const auto leaves = bind_leaves(tape, p.t);
  const auto terms = stage1_terms<Var>(&tape, leaves, p, *e_, batch_, sigma_, n0_, seed_);
  Var loss = terms.l_mse * lambdas_.lambda1 - terms.l_rb;
  tape.backward(loss);
  Vec grad;
  visit_tensors(const_cast<DenoiserTensors<Var>&>(leaves), [&](auto& t) {
    for (Var v : t) grad.push_back(tape.grad(v));
  });
  return grad;
}

StageTwoLoss::StageTwoLoss(MapperParams shape, const DenoiserParams& p, const Encoder& e,
                           std::span<const Vec> batch, double sigma, int n0,
                           GsbLossWeights lambdas, std::uint64_t seed)
    : shape_(std::move(shape)),
      p_(&p),
      e_(&e),
      batch_(batch.begin(), batch.end()),
      sigma_(sigma),
      n0_(n0),
      lambdas_(lambdas),
      seed_(seed) {}

double StageTwoLoss::value(std::span<const double> params) const {
  MapperParams m = shape_;
  unflatten(params, m);
  const auto terms = stage2_terms<double>(
      nullptr, std::span<const MapperBlockTensors<double>>(m.blocks), m, p_, *e_, batch_, sigma_,
      n0_, seed_);
  return -terms.l_rb + lambdas_.lambda2 * terms.l_stats + lambdas_.lambda3 * terms.l_id;
}

Vec StageTwoLoss::gradient(std::span<const double> params) const {
  MapperParams m = shape_;
  unflatten(params, m);
  Tape tape;
  std::vector<MapperBlockTensors<Var>> leaves;
  leaves.reserve(m.blocks.size());
  for (const auto& blk : m.blocks) leaves.push_back(bind_leaves(tape, blk));
  const auto terms =
      stage2_terms<Var>(&tape, std::span<const MapperBlockTensors<Var>>(leaves), m, p_, *e_,
                        batch_, sigma_, n0_, seed_);
  Var loss = terms.l_stats * lambdas_.lambda2 + terms.l_id * lambdas_.lambda3 - terms.l_rb;
  tape.backward(loss);
  Vec grad;
  for (auto& blk : leaves)
    visit_tensors(blk, [&](auto& t) {
      for (Var v : t) grad.push_back(tape.grad(v));
    });
  return grad;
}

}  // namespace fscert
