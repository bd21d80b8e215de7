#include "net.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "dsp.hpp"
#include "extractor.hpp"

namespace dxnet {

Variant variant_from_string(const std::string& s) {
  if (s == "denet") return Variant::denet;
  if (s == "danet") return Variant::danet;
  if (s == "danet_anchor") return Variant::danet_anchor;
  throw UsageError("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::denet: return "denet";
    case Variant::danet: return "danet";
    case Variant::danet_anchor: return "danet_anchor";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (num_rnn_layers < 1 || rnn_hidden < 1 || embed_dim < 1 || F < 1)
    throw UsageError("model config: all sizes must be positive");
  if (variant == Variant::denet && ff_hidden < 1)
    throw UsageError("model config: ff_hidden must be positive for denet");
}

ModelConfig ModelConfig::preset(const std::string& name, Variant v) {
  ModelConfig c;
  c.variant = v;
  if (name == "paper") {
    c.num_rnn_layers = 4;
    c.rnn_hidden = 600;
    c.embed_dim = 40;
    c.ff_hidden = 256;
    c.F = 257;
    c.normalize_input = false;
    c.log_input = false;
  } else if (name == "desk") {
    c.num_rnn_layers = 2;
    c.rnn_hidden = 64;
    c.embed_dim = 20;
    c.ff_hidden = 64;
    c.F = 257;
    c.normalize_input = true;
  } else if (name == "tiny") {
    c.num_rnn_layers = 1;
    c.rnn_hidden = 8;
    c.embed_dim = 4;
    c.ff_hidden = 6;
    c.F = 17;
    c.normalize_input = true;
  } else {
    throw UsageError("unknown preset: " + name);
  }
  return c;
}

ModelParams ModelParams::zeros_like(const ModelParams& p) {
  ModelParams z;
  z.cfg = p.cfg;
  z.lstm.resize(p.lstm.size());
  for (size_t l = 0; l < p.lstm.size(); ++l) {
    for (auto dir : {0, 1}) {
      const auto& s = dir == 0 ? p.lstm[l].fwd : p.lstm[l].bwd;
      auto& d = dir == 0 ? z.lstm[l].fwd : z.lstm[l].bwd;
      d.Wx = Mat::Zero(s.Wx.rows(), s.Wx.cols());
      d.Wh = Mat::Zero(s.Wh.rows(), s.Wh.cols());
      d.b = Vec::Zero(s.b.size());
    }
  }
  z.proj.W = Mat::Zero(p.proj.W.rows(), p.proj.W.cols());
  z.proj.b = Vec::Zero(p.proj.b.size());
  if (p.cfg.variant == Variant::denet) {
    z.ff1.W = Mat::Zero(p.ff1.W.rows(), p.ff1.W.cols());
    z.ff1.b = Vec::Zero(p.ff1.b.size());
    z.ff2.W = Mat::Zero(p.ff2.W.rows(), p.ff2.W.cols());
    z.ff2.b = Vec::Zero(p.ff2.b.size());
  }
  return z;
}

size_t NamedTensor::count() const {
  size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<NamedTensor> named_tensors(ModelParams& p) {
  std::vector<NamedTensor> out;
  auto add_mat = [&](const std::string& name, Mat& m) {
    out.push_back({name, m.data(), {uint32_t(m.rows()), uint32_t(m.cols())}});
  };
  auto add_vec = [&](const std::string& name, Vec& v) {
    out.push_back({name, v.data(), {uint32_t(v.size())}});
  };
  for (size_t l = 0; l < p.lstm.size(); ++l) {
    const std::string base = "lstm" + std::to_string(l);
    for (auto dir : {0, 1}) {
      auto& d = dir == 0 ? p.lstm[l].fwd : p.lstm[l].bwd;
      const std::string dn = base + (dir == 0 ? ".fwd" : ".bwd");
      add_mat(dn + ".Wx", d.Wx);
      add_mat(dn + ".Wh", d.Wh);
      add_vec(dn + ".b", d.b);
    }
  }
  add_mat("proj.W", p.proj.W);
  add_vec("proj.b", p.proj.b);
  if (p.cfg.variant == Variant::denet) {
    add_mat("ff1.W", p.ff1.W);
    add_vec("ff1.b", p.ff1.b);
    add_mat("ff2.W", p.ff2.W);
    add_vec("ff2.b", p.ff2.b);
  }
  return out;
}

bool ModelParams::all_finite() const {
  auto& self = const_cast<ModelParams&>(*this);
  for (const auto& t : named_tensors(self))
    for (size_t i = 0; i < t.count(); ++i)
      if (!std::isfinite(t.data[i])) return false;
  return true;
}

namespace {

// Uniform in [0,1) from the top 53 bits; identical across platforms.
double next_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int H = cfg.rnn_hidden;
  const int K = cfg.embed_dim;
  ModelParams p;
  p.cfg = cfg;
  p.lstm.resize(cfg.num_rnn_layers);
  for (int l = 0; l < cfg.num_rnn_layers; ++l) {
    const int D = l == 0 ? cfg.F : 2 * H;
    for (auto* d : {&p.lstm[l].fwd, &p.lstm[l].bwd}) {
      d->Wx = Mat(4 * H, D);
      d->Wh = Mat(4 * H, H);
      d->b = Vec::Zero(4 * H);
      d->b.segment(H, H).setOnes();  // forget gate
    }
  }
  p.proj.W = Mat(cfg.F * K, 2 * H);
  p.proj.b = Vec::Zero(cfg.F * K);
  if (cfg.variant == Variant::denet) {
    p.ff1.W = Mat(cfg.ff_hidden, 2 * K);
    p.ff1.b = Vec::Zero(cfg.ff_hidden);
    p.ff2.W = Mat(K, cfg.ff_hidden);
    p.ff2.b = Vec::Zero(K);
  }

  std::mt19937_64 rng(seed);
  for (auto& t : named_tensors(p)) {
    if (t.dims.size() != 2) continue;  // biases keep their fixed init
    const double bound = std::sqrt(1.0 / double(t.dims[1]));
    for (size_t i = 0; i < t.count(); ++i)
      t.data[i] = (2.0 * next_unit(rng) - 1.0) * bound;
  }
  return p;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void lstm_dir_forward(const LstmDirParams& prm, const Mat& x, bool reverse,
                      LstmDirCache& cache) {
  const int T = int(x.cols());
  const int H = int(prm.Wh.cols());
  cache.gates.resize(4 * H, T);
  cache.c.resize(H, T);
  cache.h.resize(H, T);
  const Mat zx = prm.Wx * x;  // 4H x T

  Vec h_prev = Vec::Zero(H), c_prev = Vec::Zero(H);
  for (int step = 0; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    Vec z = zx.col(t) + prm.Wh * h_prev + prm.b;
    auto g = cache.gates.col(t);
    for (int j = 0; j < H; ++j) {
      g[j] = sigmoid(z[j]);                     // i
      g[H + j] = sigmoid(z[H + j]);             // f
      g[2 * H + j] = std::tanh(z[2 * H + j]);   // g
      g[3 * H + j] = sigmoid(z[3 * H + j]);     // o
    }
    for (int j = 0; j < H; ++j) {
      const double c = g[H + j] * c_prev[j] + g[j] * g[2 * H + j];
      cache.c(j, t) = c;
      cache.h(j, t) = g[3 * H + j] * std::tanh(c);
    }
    h_prev = cache.h.col(t);
    c_prev = cache.c.col(t);
  }
}

void lstm_dir_backward(const LstmDirParams& prm, const Mat& x,
                       const LstmDirCache& cache, const Mat& dh_in, bool reverse,
                       LstmDirParams& grad, Mat& dx_accum) {
  const int T = int(x.cols());
  const int H = int(prm.Wh.cols());
  Mat dZ = Mat::Zero(4 * H, T);
  Mat h_prev_all = Mat::Zero(H, T);  // recurrent input at each natural position
  for (int step = 1; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    const int tp = reverse ? t + 1 : t - 1;
    h_prev_all.col(t) = cache.h.col(tp);
  }

  Vec dh_rec = Vec::Zero(H), dc = Vec::Zero(H);
  for (int step = T - 1; step >= 0; --step) {
    const int t = reverse ? T - 1 - step : step;
    const int tp = reverse ? t + 1 : t - 1;
    const bool has_prev = step > 0;
    Vec dh = dh_in.col(t) + dh_rec;
    auto g = cache.gates.col(t);
    Vec dz(4 * H);
    for (int j = 0; j < H; ++j) {
      const double i = g[j], f = g[H + j], gg = g[2 * H + j], o = g[3 * H + j];
      const double tc = std::tanh(cache.c(j, t));
      const double dco = dh[j] * o * (1.0 - tc * tc) + dc[j];
      const double c_prev = has_prev ? cache.c(j, tp) : 0.0;
      dz[j] = dco * gg * i * (1.0 - i);
      dz[H + j] = dco * c_prev * f * (1.0 - f);
      dz[2 * H + j] = dco * i * (1.0 - gg * gg);
      dz[3 * H + j] = dh[j] * tc * o * (1.0 - o);
      dc[j] = dco * f;
    }
    dZ.col(t) = dz;
    dh_rec.noalias() = prm.Wh.transpose() * dz;
  }

  grad.Wx.noalias() += dZ * x.transpose();
  grad.Wh.noalias() += dZ * h_prev_all.transpose();
  grad.b += dZ.rowwise().sum();
  dx_accum.noalias() += prm.Wx.transpose() * dZ;
}

Mat bins_from_frames(const Mat& E, int F, int T, int K) {
  Mat vb(K, F * T);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k)
      for (int f = 0; f < F; ++f) vb(k, t * F + f) = E(f + k * F, t);
  return vb;
}

Mat frames_from_bins(const Mat& vb, int F, int T) {
  const int K = int(vb.rows());
  Mat E(F * K, T);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k)
      for (int f = 0; f < F; ++f) E(f + k * F, t) = vb(k, t * F + f);
  return E;
}

}  // namespace

Mat field_to_bins(const EmbeddingField& v) { return v.v.transpose(); }

EmbeddingField bins_to_field(const Mat& vb, int F, int T) {
  EmbeddingField out;
  out.F = F;
  out.T = T;
  out.K = int(vb.rows());
  out.v = vb.transpose();
  return out;
}

EmbeddingField encode_primary(const ModelParams& p, const Mat& x,
                              EncoderCache* cache) {
  const auto& cfg = p.cfg;
  if (int(x.rows()) != cfg.F)
    throw RuntimeError("encode_primary: input has " + std::to_string(x.rows()) +
                       " bins, model expects " + std::to_string(cfg.F));
  const int T = int(x.cols());
  const int H = cfg.rnn_hidden;
  const int K = cfg.embed_dim;

  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.x = x;
  if (cfg.normalize_input) {
    const double mx = x.maxCoeff();
    if (mx > 0.0) c.x /= mx;
  }
  if (cfg.log_input) {
    // Map [0,1] onto [0,1] with ~60 dB of dynamic-range compression.
    c.x = ((c.x.array() * 1000.0 + 1.0).log() / std::log(1001.0)).matrix();
  }

  c.layers.resize(cfg.num_rnn_layers);
  const Mat* input = &c.x;
  Mat concat;
  for (int l = 0; l < cfg.num_rnn_layers; ++l) {
    lstm_dir_forward(p.lstm[l].fwd, *input, false, c.layers[l][0]);
    lstm_dir_forward(p.lstm[l].bwd, *input, true, c.layers[l][1]);
    concat.resize(2 * H, T);
    concat.topRows(H) = c.layers[l][0].h;
    concat.bottomRows(H) = c.layers[l][1].h;
    if (l + 1 < cfg.num_rnn_layers) {
      c.hcat = concat;
      input = &c.hcat;
    }
  }
  c.hcat = concat;

  c.E = ((p.proj.W * c.hcat).colwise() + p.proj.b).array().tanh();
  return bins_to_field(bins_from_frames(c.E, cfg.F, T, K), cfg.F, T);
}

void encode_backward(const ModelParams& p, const EncoderCache& cache,
                     const Mat& dE, ModelParams& grad) {
  const auto& cfg = p.cfg;
  const int T = int(cache.E.cols());
  const int H = cfg.rnn_hidden;

  const Mat dZp = dE.array() * (1.0 - cache.E.array().square());
  grad.proj.W.noalias() += dZp * cache.hcat.transpose();
  grad.proj.b += dZp.rowwise().sum();
  Mat dh = p.proj.W.transpose() * dZp;  // 2H x T

  for (int l = cfg.num_rnn_layers - 1; l >= 0; --l) {
    // Reconstruct this layer's input from the cache below it.
    Mat input;
    if (l == 0) {
      input = cache.x;
    } else {
      input.resize(2 * H, T);
      input.topRows(H) = cache.layers[l - 1][0].h;
      input.bottomRows(H) = cache.layers[l - 1][1].h;
    }
    Mat dx = Mat::Zero(input.rows(), T);
    lstm_dir_backward(p.lstm[l].fwd, input, cache.layers[l][0], dh.topRows(H),
                      false, grad.lstm[l].fwd, dx);
    lstm_dir_backward(p.lstm[l].bwd, input, cache.layers[l][1], dh.bottomRows(H),
                      true, grad.lstm[l].bwd, dx);
    dh = dx;
  }
}

EmbeddingField map_canonical(const ModelParams& p, const Vec& a,
                             const EmbeddingField& v) {
  if (p.cfg.variant != Variant::denet)
    throw UsageError("map_canonical: requires a denet model");
  if (int(a.size()) != p.cfg.embed_dim)
    throw RuntimeError("map_canonical: extractor dimension mismatch");
  const int K = p.cfg.embed_dim;
  const int Nb = v.bins();
  Mat U(2 * K, Nb);
  U.topRows(K) = a.replicate(1, Nb);
  U.bottomRows(K) = field_to_bins(v);
  const Mat H1 = ((p.ff1.W * U).colwise() + p.ff1.b).array().tanh();
  const Mat Vt = (p.ff2.W * H1).colwise() + p.ff2.b;
  return bins_to_field(Vt, v.F, v.T);
}

namespace {

struct FfCache {
  Mat U;   // 2K x Nb
  Mat H1;  // ff_hidden x Nb
  Mat Vt;  // K x Nb
};

void ff_forward(const ModelParams& p, const Vec& a, const Mat& vm_bins,
                FfCache& c) {
  const int K = p.cfg.embed_dim;
  const int Nb = int(vm_bins.cols());
  c.U.resize(2 * K, Nb);
  c.U.topRows(K) = a.replicate(1, Nb);
  c.U.bottomRows(K) = vm_bins;
  c.H1 = ((p.ff1.W * c.U).colwise() + p.ff1.b).array().tanh();
  c.Vt = (p.ff2.W * c.H1).colwise() + p.ff2.b;
}

// Returns (da, dVm_bins) and accumulates the feed-forward parameter grads.
void ff_backward(const ModelParams& p, const FfCache& c, const Mat& dVt,
                 ModelParams& grad, Vec& da, Mat& dvm_bins) {
  const int K = p.cfg.embed_dim;
  grad.ff2.W.noalias() += dVt * c.H1.transpose();
  grad.ff2.b += dVt.rowwise().sum();
  const Mat dH1 = p.ff2.W.transpose() * dVt;
  const Mat dZ1 = dH1.array() * (1.0 - c.H1.array().square());
  grad.ff1.W.noalias() += dZ1 * c.U.transpose();
  grad.ff1.b += dZ1.rowwise().sum();
  const Mat dU = p.ff1.W.transpose() * dZ1;
  da = dU.topRows(K).rowwise().sum();
  dvm_bins = dU.bottomRows(K);
}

// Shared tail: mask from inner products, L2 reconstruction, backward to the
// extractor and the bin embeddings.
double mask_loss_backward(const Vec& extractor, const Mat& v_bins, const Vec& xb,
                          const Vec& sb, bool want_grad, Vec& d_extractor,
                          Mat& dv_bins) {
  const Vec q = v_bins.transpose() * extractor;
  const Vec m = q.unaryExpr([](double z) { return sigmoid(z); });
  const Vec r = sb - xb.cwiseProduct(m);
  const double loss = r.squaredNorm();
  if (want_grad) {
    const Vec dq = (-2.0 * xb.cwiseProduct(r))
                       .cwiseProduct(m.cwiseProduct(Vec::Ones(m.size()) - m));
    d_extractor = v_bins * dq;
    dv_bins = extractor * dq.transpose();
  }
  return loss;
}

}  // namespace

double item_loss(const ModelParams& p, const TrainItem& item, ModelParams* grad) {
  const auto& cfg = p.cfg;
  const int F = cfg.F;
  const int K = cfg.embed_dim;
  const bool want_grad = grad != nullptr;

  const int Tm = int(item.mixture.cols());
  const Vec xb = flatten_tf(item.mixture);
  const Vec sb = flatten_tf(item.target);

  EncoderCache mix_cache;
  encode_primary(p, item.mixture, &mix_cache);
  const Mat vm_bins = bins_from_frames(mix_cache.E, F, Tm, K);

  double loss = 0.0;
  Mat dvm_bins;

  if (cfg.variant == Variant::danet) {
    // One membership per source: the target and each interferer.
    std::vector<Mat> sources;
    sources.push_back(item.target);
    for (const auto& i : item.interferers) sources.push_back(i);
    dvm_bins = Mat::Zero(K, F * Tm);
    for (size_t s = 0; s < sources.size(); ++s) {
      std::vector<Mat> others;
      for (size_t o = 0; o < sources.size(); ++o)
        if (o != s) others.push_back(sources[o]);
      const Mat ym = ideal_membership(sources[s], others);
      const Vec wm = flatten_tf(ym);
      const double denom = wm.sum();
      // A source can be entirely paused within a training crop; it then has
      // no attractor and contributes nothing to this item's loss.
      if (denom <= 0.0) continue;
      const Vec a = (vm_bins * wm) / denom;
      const Vec src_b = flatten_tf(sources[s]);
      Vec da;
      Mat dv;
      loss += mask_loss_backward(a, vm_bins, xb, src_b, want_grad, da, dv);
      if (want_grad) {
        dvm_bins += dv;
        dvm_bins += (da * wm.transpose()) / denom;
      }
    }
    if (want_grad)
      encode_backward(p, mix_cache, frames_from_bins(dvm_bins, F, Tm), *grad);
    return loss;
  }

  // Anchor branch (denet and danet_anchor).
  const Mat ya = presence_mask(item.anchor);
  const Vec wa = flatten_tf(ya);
  const double wa_sum = wa.sum();
  if (wa_sum <= 0.0) throw RuntimeError("empty anchor presence");
  EncoderCache anc_cache;
  encode_primary(p, item.anchor, &anc_cache);
  const int Ta = int(item.anchor.cols());
  const Mat va_bins = bins_from_frames(anc_cache.E, F, Ta, K);
  const Vec a = (va_bins * wa) / wa_sum;

  Vec da = Vec::Zero(K);
  if (cfg.variant == Variant::danet_anchor) {
    Mat dv;
    loss = mask_loss_backward(a, vm_bins, xb, sb, want_grad, da, dv);
    if (want_grad) dvm_bins = dv;
  } else {  // denet
    FfCache ff;
    ff_forward(p, a, vm_bins, ff);
    const Mat ym = ideal_membership(item.target, item.interferers);
    const Vec wm = flatten_tf(ym);
    const double wm_sum = wm.sum();
    if (wm_sum <= 0.0) return 0.0;  // target absent from this crop
    const Vec at = (ff.Vt * wm) / wm_sum;

    Vec dat;
    Mat dVt;
    loss = mask_loss_backward(at, ff.Vt, xb, sb, want_grad, dat, dVt);
    if (want_grad) {
      dVt += (dat * wm.transpose()) / wm_sum;
      ff_backward(p, ff, dVt, *grad, da, dvm_bins);
    }
  }

  if (want_grad) {
    encode_backward(p, mix_cache, frames_from_bins(dvm_bins, F, Tm), *grad);
    const Mat dva_bins = (da * wa.transpose()) / wa_sum;
    encode_backward(p, anc_cache, frames_from_bins(dva_bins, F, Ta), *grad);
  }
  return loss;
}

namespace {

int worker_count(size_t n_items) {
  int n = int(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DXNET_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = cap;
  }
  return std::max(1, std::min<int>(n, int(n_items)));
}

}  // namespace

double compute_gradients(const ModelParams& p, const std::vector<TrainItem>& batch,
                         ModelParams& grad) {
  if (batch.empty()) throw UsageError("compute_gradients: empty batch");
  double loss = 0.0;
  const int workers = worker_count(batch.size());
  if (workers <= 1) {
    for (const auto& item : batch) loss += item_loss(p, item, &grad);
  } else {
    // Per-item gradients land in per-slot buffers and are reduced in item
    // order, so the result is identical to the serial path.
    std::vector<ModelParams> slot_grads;
    std::vector<double> slot_loss(batch.size(), 0.0);
    std::vector<std::exception_ptr> errors;
    errors.resize(size_t(workers));
    for (size_t i = 0; i < batch.size(); ++i)
      slot_grads.push_back(ModelParams::zeros_like(p));
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (size_t i = size_t(w); i < batch.size(); i += size_t(workers))
            slot_loss[i] = item_loss(p, batch[i], &slot_grads[i]);
        } catch (...) {
          errors[size_t(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    auto gts = named_tensors(grad);
    for (size_t i = 0; i < batch.size(); ++i) {
      loss += slot_loss[i];
      auto sts = named_tensors(slot_grads[i]);
      for (size_t t = 0; t < gts.size(); ++t)
        for (size_t j = 0; j < gts[t].count(); ++j)
          gts[t].data[j] += sts[t].data[j];
    }
  }
  if (!std::isfinite(loss))
    throw RuntimeError("non-finite loss (" + std::to_string(loss) +
                       ") over batch of " + std::to_string(batch.size()));
  return loss;
}

}  // namespace dxnet
