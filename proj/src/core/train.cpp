#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "data.hpp"
#include "dsp.hpp"
#include "extractor.hpp"
#include "wav.hpp"

using nlohmann::json;

namespace dxnet {

double reconstruction_loss(const Mat& x, const Mat& s, const Mat& m) {
  if (x.rows() != s.rows() || x.cols() != s.cols() || x.rows() != m.rows() ||
      x.cols() != m.cols())
    throw RuntimeError("reconstruction_loss: shape mismatch");
  return (s - x.cwiseProduct(m)).squaredNorm();
}

StftConfig preset_stft(const std::string& preset) {
  if (preset == "tiny") return StftConfig{32, 16};
  return StftConfig{512, 256};
}

void TrainConfig::resolve() {
  if (epochs < 1) throw UsageError("train: epochs must be >= 1");
  if (learning_rate <= 0.0) throw UsageError("train: learning rate must be positive");
  if (batch_size < 1) throw UsageError("train: batch size must be >= 1");
  stft = preset_stft(preset);
  model = ModelConfig::preset(preset, variant);
  model.F = stft.num_bins();
}

AdamState AdamState::zeros_like(const ModelParams& p) {
  AdamState st;
  st.m = ModelParams::zeros_like(p);
  st.v = ModelParams::zeros_like(p);
  return st;
}

double train_step(ModelParams& p, const std::vector<TrainItem>& batch,
                  const TrainConfig& cfg, AdamState& st) {
  ModelParams grad = ModelParams::zeros_like(p);
  const double loss = compute_gradients(p, batch, grad);

  auto gts = named_tensors(grad);
  double sq = 0.0;
  for (const auto& t : gts)
    for (size_t i = 0; i < t.count(); ++i) sq += t.data[i] * t.data[i];
  const double gnorm = std::sqrt(sq);
  const double scale =
      gnorm > cfg.grad_clip_norm ? cfg.grad_clip_norm / gnorm : 1.0;

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  st.step += 1;
  const double bc1 = 1.0 - std::pow(b1, double(st.step));
  const double bc2 = 1.0 - std::pow(b2, double(st.step));
  auto pts = named_tensors(p);
  auto mts = named_tensors(st.m);
  auto vts = named_tensors(st.v);
  for (size_t i = 0; i < pts.size(); ++i) {
    for (size_t j = 0; j < pts[i].count(); ++j) {
      const double g = gts[i].data[j] * scale;
      double& m = mts[i].data[j];
      double& v = vts[i].data[j];
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g * g;
      pts[i].data[j] -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + eps);
    }
  }
  return loss;
}

namespace {

Mat wav_magnitude(const std::string& path, const StftConfig& cfg) {
  return magnitude(stft(read_wav(path), cfg));
}

// Random contiguous frame crop shared across mixture/target/interferers.
// Shorter utterances pass through whole; the anchor is never cropped.
TrainItem crop_item(const TrainItem& src, int frames, std::mt19937_64& rng) {
  const int T = int(src.mixture.cols());
  if (frames <= 0 || T <= frames) return src;
  const int off = int(rng() % uint64_t(T - frames + 1));
  TrainItem out;
  out.anchor = src.anchor;
  out.mixture = src.mixture.middleCols(off, frames);
  out.target = src.target.middleCols(off, frames);
  for (const auto& i : src.interferers)
    out.interferers.push_back(i.middleCols(off, frames));
  return out;
}

// Raw source material kept alongside the precomputed magnitudes so that
// fresh training mixtures can be synthesized every epoch.
struct TrainSources {
  Waveform anchor;
  Waveform target;
  std::vector<Waveform> interferers;
  double sir_db = 0.0;
};

// Epoch-level remix augmentation: pair the item's target with interferer
// takes drawn from anywhere in the manifest, circularly shifted and mixed at
// an SIR drawn from the manifest's own SIR values. The model then never sees
// the same mixture twice and cannot memorize fixed target/interferer pairs;
// the anchor is the only cue that identifies the target across epochs.
TrainItem remix_item(const TrainItem& base, const std::vector<TrainSources>& srcs,
                     size_t self, const StftConfig& sc, std::mt19937_64& rng) {
  const auto& me = srcs[self];
  if (me.target.samples.empty() || me.interferers.empty()) return base;

  for (int attempt = 0; attempt < 3; ++attempt) {
    std::vector<Waveform> ints;
    for (size_t slot = 0; slot < me.interferers.size(); ++slot) {
      // Draw from the union of every item's target and interferer takes (never
      // this item's own target). If interferers came only from the interferer
      // pool, pool membership alone would identify the target and the model
      // could ignore the anchor entirely.
      const size_t j = rng() % srcs.size();
      const auto& donor = srcs[j];
      const bool use_target =
          j != self && !donor.target.samples.empty() && (rng() & 1);
      const auto& pool =
          donor.interferers.empty() ? me.interferers : donor.interferers;
      Waveform w = use_target ? donor.target : pool[rng() % pool.size()];
      const size_t shift = rng() % w.samples.size();
      std::rotate(w.samples.begin(), w.samples.begin() + long(shift),
                  w.samples.end());
      ints.push_back(std::move(w));
    }
    // Keep the item's own SIR so each item's difficulty is stable across
    // epochs; the epoch-mean loss then tracks learning progress instead of
    // the luck of the SIR draw.
    const double sir = me.sir_db;
    try {
      std::vector<Waveform> scaled;
      const Waveform mix = mix_at_sir(me.target, ints, sir, &scaled);
      Waveform tgt = me.target;
      tgt.samples.resize(mix.samples.size());
      TrainItem it;
      it.anchor = base.anchor;
      // Vary the enrollment audio as well: a random circular window of either
      // the anchor take or the target take, so the model matches the voice
      // rather than one fixed anchor recording.
      if (!me.anchor.samples.empty()) {
        const Waveform& take = ((rng() & 1) == 0) ? me.anchor : me.target;
        const size_t len = take.samples.size();
        const size_t wlen = len / 2 + rng() % (len - len / 2);
        const size_t off = rng() % len;
        Waveform aw;
        aw.sample_rate_hz = take.sample_rate_hz;
        aw.samples.resize(wlen);
        for (size_t k = 0; k < wlen; ++k)
          aw.samples[k] = take.samples[(off + k) % len];
        it.anchor = magnitude(stft(aw, sc));
      }
      it.mixture = magnitude(stft(mix, sc));
      it.target = magnitude(stft(tgt, sc));
      for (const auto& s : scaled) it.interferers.push_back(magnitude(stft(s, sc)));
      return it;
    } catch (const RuntimeError&) {
      // A pause-heavy crop of the shifted interferer can have zero power in
      // the overlap region; redraw, and fall back to the original mixture if
      // it keeps happening.
    }
  }
  return base;
}

void validate_item(const TrainItem& it, Variant v, const std::string& id) {
  const bool needs_anchor = v != Variant::danet;
  const bool needs_interferers = v != Variant::danet_anchor;
  if (needs_anchor && it.anchor.size() == 0)
    throw RuntimeError("entry " + id + ": variant requires an anchor");
  if (needs_interferers && it.interferers.empty())
    throw RuntimeError("entry " + id + ": variant requires interferer references");
}

}  // namespace

TrainItem load_item(const SampleManifestEntry& e, const StftConfig& stft) {
  TrainItem it;
  it.mixture = wav_magnitude(e.mixture_path, stft);
  if (!e.target_path.empty()) it.target = wav_magnitude(e.target_path, stft);
  if (!e.anchor_path.empty()) it.anchor = wav_magnitude(e.anchor_path, stft);
  for (const auto& p : e.interferer_paths)
    it.interferers.push_back(wav_magnitude(p, stft));
  return it;
}

Checkpoint train(const std::vector<SampleManifestEntry>& manifest,
                 const TrainConfig& cfg_in, const EpochCallback& on_epoch) {
  if (manifest.empty()) throw UsageError("train: empty manifest");
  TrainConfig cfg = cfg_in;
  cfg.resolve();
  if (cfg.variant == Variant::danet) {
    for (const auto& e : manifest)
      if (e.interferer_paths.size() != 1)
        throw RuntimeError("danet training expects exactly one interferer per entry");
  }

  std::vector<TrainItem> items;
  std::vector<TrainSources> sources;
  items.reserve(manifest.size());
  sources.reserve(manifest.size());
  for (const auto& e : manifest) {
    TrainItem it = load_item(e, cfg.stft);
    validate_item(it, cfg.variant, e.id);
    items.push_back(std::move(it));
    TrainSources src;
    src.sir_db = e.sir_db;
    if (!e.target_path.empty() && !e.interferer_paths.empty()) {
      src.target = read_wav(e.target_path);
      for (const auto& p : e.interferer_paths)
        src.interferers.push_back(read_wav(p));
      if (!e.anchor_path.empty()) src.anchor = read_wav(e.anchor_path);
    }
    sources.push_back(std::move(src));
  }

  ModelParams params = init_params(cfg.model, cfg.seed);
  AdamState adam = AdamState::zeros_like(params);
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

  const int n = int(items.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  double epoch_loss = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[int(rng() % uint64_t(i + 1))]);
    int crop = 0;
    if (cfg.curriculum == Curriculum::frames_100_then_400)
      crop = epoch <= (cfg.epochs + 1) / 2 ? 100 : 400;

    double total = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      std::vector<TrainItem> batch;
      for (int i = start; i < std::min(n, start + cfg.batch_size); ++i) {
        const TrainItem it =
            remix_item(items[order[i]], sources, size_t(order[i]), cfg.stft, rng);
        batch.push_back(crop > 0 ? crop_item(it, crop, rng) : it);
      }
      total += train_step(params, batch, cfg, adam);
    }
    epoch_loss = total / double(n);
    if (!params.all_finite())
      throw RuntimeError("non-finite parameters after epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  Checkpoint ck;
  ck.params = std::move(params);
  ck.stft = cfg.stft;
  ck.seed = cfg.seed;
  ck.epochs = cfg.epochs;
  ck.final_loss = epoch_loss;

  // Inference constants from a single post-training pass over the training set.
  const int K = cfg.model.embed_dim;
  if (cfg.variant == Variant::denet) {
    ck.training_extractors = Mat(n, K);
    std::vector<Vec> all;
    for (int i = 0; i < n; ++i) {
      const auto& it = items[i];
      const Mat ya = presence_mask(it.anchor);
      const EmbeddingField va = encode_primary(ck.params, it.anchor);
      const Vec a = masked_mean_extractor(va, ya);
      const EmbeddingField vm = encode_primary(ck.params, it.mixture);
      const EmbeddingField vt = map_canonical(ck.params, a, vm);
      Mat ym = ideal_membership(it.target, it.interferers);
      if (ym.sum() <= 0.0) {
        // Degenerate mixture with no target-dominant bins: fall back to the
        // canonical extractor of the anchor itself.
        const EmbeddingField vat = map_canonical(ck.params, a, va);
        ck.training_extractors.row(i) =
            masked_mean_extractor(vat, ya).transpose();
        all.push_back(ck.training_extractors.row(i).transpose());
        continue;
      }
      const Vec at = masked_mean_extractor(vt, ym);
      ck.training_extractors.row(i) = at.transpose();
      all.push_back(at);
    }
    ck.preset_extractor = preset_extractor(all);
  } else if (cfg.variant == Variant::danet) {
    std::vector<Vec> tgt, intf;
    for (int i = 0; i < n; ++i) {
      const auto& it = items[i];
      const EmbeddingField vm = encode_primary(ck.params, it.mixture);
      const Mat y1 = ideal_membership(it.target, it.interferers);
      const Mat y2 = ideal_membership(it.interferers[0], {it.target});
      if (y1.sum() > 0.0) tgt.push_back(masked_mean_extractor(vm, y1));
      if (y2.sum() > 0.0) intf.push_back(masked_mean_extractor(vm, y2));
    }
    ck.fixed_attractor_pair.a1 = preset_extractor(tgt);
    ck.fixed_attractor_pair.a2 = preset_extractor(intf);
  }
  return ck;
}

namespace {

constexpr char kMagic[6] = {'D', 'X', 'N', 'E', 'T', '\x01'};

void put_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.write(b, 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw RuntimeError("checkpoint: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_tensor(std::ostream& out, const std::string& name, const double* data,
                const std::vector<uint32_t>& dims) {
  put_u32(out, uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  put_u32(out, uint32_t(dims.size()));
  size_t count = 1;
  for (auto d : dims) {
    put_u32(out, d);
    count *= d;
  }
  out.write(reinterpret_cast<const char*>(data),
            std::streamsize(count * sizeof(double)));
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  auto& params = const_cast<ModelParams&>(c.params);
  const auto& cfg = params.cfg;

  json meta;
  meta["variant"] = to_string(cfg.variant);
  meta["model"] = {{"num_rnn_layers", cfg.num_rnn_layers},
                   {"rnn_hidden", cfg.rnn_hidden},
                   {"embed_dim", cfg.embed_dim},
                   {"ff_hidden", cfg.ff_hidden},
                   {"F", cfg.F},
                   {"normalize_input", cfg.normalize_input},
                   {"log_input", cfg.log_input}};
  meta["stft"] = {{"win_len", c.stft.win_len}, {"hop", c.stft.hop}};
  meta["training"] = {{"seed", c.seed},
                      {"epochs", c.epochs},
                      {"final_loss", c.final_loss}};
  if (cfg.variant == Variant::denet) {
    meta["preset_extractor"] =
        std::vector<double>(c.preset_extractor.data(),
                            c.preset_extractor.data() + c.preset_extractor.size());
  }
  if (cfg.variant == Variant::danet) {
    meta["fixed_attractor_pair"] = {
        {"a1", std::vector<double>(c.fixed_attractor_pair.a1.data(),
                                   c.fixed_attractor_pair.a1.data() +
                                       c.fixed_attractor_pair.a1.size())},
        {"a2", std::vector<double>(c.fixed_attractor_pair.a2.data(),
                                   c.fixed_attractor_pair.a2.data() +
                                       c.fixed_attractor_pair.a2.size())}};
    meta["attractor_order"] = c.attractor_order;
  }
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write checkpoint: " + path);
  out.write(kMagic, 6);
  put_u32(out, uint32_t(meta_str.size()));
  out.write(meta_str.data(), std::streamsize(meta_str.size()));

  auto tensors = named_tensors(params);
  uint32_t extra = cfg.variant == Variant::denet && c.training_extractors.size() ? 1 : 0;
  put_u32(out, uint32_t(tensors.size()) + extra);
  for (const auto& t : tensors) put_tensor(out, t.name, t.data, t.dims);
  if (extra)
    put_tensor(out, "training_extractors", c.training_extractors.data(),
               {uint32_t(c.training_extractors.rows()),
                uint32_t(c.training_extractors.cols())});
  if (!out) throw RuntimeError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kMagic, 6) != 0)
    throw RuntimeError("checkpoint: bad magic");

  const uint32_t meta_len = get_u32(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) throw RuntimeError("checkpoint: truncated metadata");
  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::exception& e) {
    throw RuntimeError(std::string("checkpoint: bad metadata JSON: ") + e.what());
  }

  Checkpoint c;
  ModelConfig cfg;
  cfg.variant = variant_from_string(meta.at("variant").get<std::string>());
  const auto& m = meta.at("model");
  cfg.num_rnn_layers = m.at("num_rnn_layers").get<int>();
  cfg.rnn_hidden = m.at("rnn_hidden").get<int>();
  cfg.embed_dim = m.at("embed_dim").get<int>();
  cfg.ff_hidden = m.at("ff_hidden").get<int>();
  cfg.F = m.at("F").get<int>();
  cfg.normalize_input = m.at("normalize_input").get<bool>();
  cfg.log_input = m.value("log_input", false);
  c.stft.win_len = meta.at("stft").at("win_len").get<int>();
  c.stft.hop = meta.at("stft").at("hop").get<int>();
  c.seed = meta.at("training").at("seed").get<uint64_t>();
  c.epochs = meta.at("training").at("epochs").get<int>();
  c.final_loss = meta.at("training").at("final_loss").get<double>();

  if (cfg.variant == Variant::denet) {
    if (!meta.contains("preset_extractor"))
      throw RuntimeError("checkpoint: denet checkpoint missing preset extractor");
    auto v = meta["preset_extractor"].get<std::vector<double>>();
    c.preset_extractor = Eigen::Map<Vec>(v.data(), long(v.size()));
  }
  if (cfg.variant == Variant::danet) {
    if (!meta.contains("fixed_attractor_pair"))
      throw RuntimeError("checkpoint: danet checkpoint missing attractor pair");
    auto a1 = meta["fixed_attractor_pair"].at("a1").get<std::vector<double>>();
    auto a2 = meta["fixed_attractor_pair"].at("a2").get<std::vector<double>>();
    c.fixed_attractor_pair.a1 = Eigen::Map<Vec>(a1.data(), long(a1.size()));
    c.fixed_attractor_pair.a2 = Eigen::Map<Vec>(a2.data(), long(a2.size()));
    c.attractor_order = meta.value("attractor_order", "target_first");
  }

  c.params = init_params(cfg, 0);  // allocates shapes; values overwritten below
  auto tensors = named_tensors(c.params);
  const uint32_t n_tensors = get_u32(in);
  size_t matched = 0;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rank = get_u32(in);
    std::vector<uint32_t> dims(rank);
    size_t count = 1;
    for (auto& d : dims) {
      d = get_u32(in);
      count *= d;
    }
    std::vector<double> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(count * sizeof(double)));
    if (!in) throw RuntimeError("checkpoint: truncated tensor " + name);

    if (name == "training_extractors") {
      if (rank != 2) throw RuntimeError("checkpoint: bad training_extractors rank");
      c.training_extractors =
          Eigen::Map<Mat>(buf.data(), long(dims[0]), long(dims[1]));
      continue;
    }
    bool found = false;
    for (auto& t : tensors) {
      if (t.name != name) continue;
      if (t.dims != dims)
        throw RuntimeError("checkpoint: tensor shape mismatch for " + name);
      std::copy(buf.begin(), buf.end(), t.data);
      found = true;
      ++matched;
      break;
    }
    if (!found) throw RuntimeError("checkpoint: unexpected tensor " + name);
  }
  if (matched != tensors.size())
    throw RuntimeError("checkpoint: missing model tensors");
  return c;
}

}  // namespace dxnet
