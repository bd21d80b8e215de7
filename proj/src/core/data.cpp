#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dxnet {

namespace {

double next_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) +
               0xbf58476d1ce4e5b9ULL * (b + 1) + 0x94d049bb133111ebULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double power(const std::vector<double>& x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return n > 0 ? acc / double(n) : 0.0;
}

}  // namespace

Waveform synth_speaker_utterance(const ToySpeakerSpec& spec, double duration_s,
                                 uint64_t seed) {
  if (duration_s < 0.5) throw UsageError("synth: duration must be >= 0.5 s");
  const int sr = 16000;
  const int n = int(std::lround(duration_s * sr));
  std::mt19937_64 rng(seed);

  // Harmonic amplitudes: fundamental fixed at 1 so the spectral peak stays at
  // f0; higher harmonics roll off and get a formant-like bump.
  std::vector<double> amp, phase;
  for (int h = 1; h * spec.f0_hz < 6800.0; ++h) {
    double a = 1.0;
    if (h > 1) {
      const double d = (h * spec.f0_hz - spec.formant_center_hz) / 900.0;
      a = std::pow(spec.harmonic_decay, h - 1) *
          (0.25 + 0.75 * std::exp(-d * d));
    }
    amp.push_back(a);
    phase.push_back(2.0 * M_PI * next_unit(rng));
  }
  const double am_phase = 2.0 * M_PI * next_unit(rng);

  // Pause gating in 120 ms blocks with 10 ms raised-cosine ramps.
  const int block = sr * 120 / 1000;
  const int ramp = sr * 10 / 1000;
  const int n_blocks = (n + block - 1) / block;
  std::vector<int> active(n_blocks, 1);
  bool any = false;
  for (int b = 0; b < n_blocks; ++b) {
    active[b] = next_unit(rng) < 0.15 ? 0 : 1;
    any = any || active[b];
  }
  if (!any) active[0] = 1;

  Waveform w;
  w.sample_rate_hz = sr;
  w.samples.resize(n);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = double(i) / sr;
    double s = 0.0;
    for (size_t h = 0; h < amp.size(); ++h)
      s += amp[h] * std::sin(2.0 * M_PI * (double(h + 1) * spec.f0_hz) * t + phase[h]);
    s *= (1.0 + 0.2 * std::sin(2.0 * M_PI * spec.am_rate_hz * t + am_phase)) / 1.2;

    const int b = i / block;
    double gate = active[b] ? 1.0 : 0.0;
    const int off = i - b * block;
    if (active[b] && b > 0 && !active[b - 1] && off < ramp)
      gate = 0.5 * (1.0 - std::cos(M_PI * off / ramp));
    else if (!active[b] && b > 0 && active[b - 1] && off < ramp)
      gate = 0.5 * (1.0 + std::cos(M_PI * off / ramp));
    s *= gate;
    w.samples[i] = s;
    peak = std::max(peak, std::abs(s));
  }
  if (peak > 0.0)
    for (auto& x : w.samples) x *= 0.5 / peak;
  return w;
}

Waveform mix_at_sir(const Waveform& target, const std::vector<Waveform>& interferers,
                    double sir_db, std::vector<Waveform>* scaled_out) {
  if (interferers.empty()) throw UsageError("mix_at_sir: no interferers");
  size_t n = target.samples.size();
  for (const auto& i : interferers) {
    if (i.sample_rate_hz != target.sample_rate_hz)
      throw RuntimeError("mix_at_sir: sample rate mismatch");
    n = std::min(n, i.samples.size());
  }
  std::vector<double> isum(n, 0.0);
  for (const auto& i : interferers)
    for (size_t k = 0; k < n; ++k) isum[k] += i.samples[k];

  const double pt = power(target.samples, n);
  const double pi = power(isum, n);
  if (pt <= 0.0 || pi <= 0.0) throw RuntimeError("zero-power source");
  const double gain = std::sqrt(pt / (pi * std::pow(10.0, sir_db / 10.0)));

  Waveform mix;
  mix.sample_rate_hz = target.sample_rate_hz;
  mix.samples.resize(n);
  for (size_t k = 0; k < n; ++k)
    mix.samples[k] = target.samples[k] + gain * isum[k];

  if (scaled_out) {
    scaled_out->clear();
    for (const auto& i : interferers) {
      Waveform s;
      s.sample_rate_hz = i.sample_rate_hz;
      s.samples.assign(i.samples.begin(), i.samples.begin() + long(n));
      for (auto& x : s.samples) x *= gain;
      scaled_out->push_back(std::move(s));
    }
  }
  return mix;
}

std::string entry_to_json(const SampleManifestEntry& e) {
  json j;
  j["id"] = e.id;
  j["anchor_path"] = e.anchor_path;
  j["mixture_path"] = e.mixture_path;
  j["target_path"] = e.target_path;
  j["interferer_paths"] = e.interferer_paths;
  j["sir_db"] = e.sir_db;
  j["speaker_id"] = e.speaker_id;
  return j.dump();
}

SampleManifestEntry entry_from_json(const std::string& line) {
  json j = json::parse(line);
  SampleManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.anchor_path = j.at("anchor_path").get<std::string>();
  e.mixture_path = j.at("mixture_path").get<std::string>();
  e.target_path = j.at("target_path").get<std::string>();
  e.interferer_paths = j.at("interferer_paths").get<std::vector<std::string>>();
  e.sir_db = j.at("sir_db").get<double>();
  e.speaker_id = j.at("speaker_id").get<std::string>();
  return e;
}

void write_manifest(const std::string& path,
                    const std::vector<SampleManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write manifest: " + path);
  for (const auto& e : entries) out << entry_to_json(e) << "\n";
}

std::vector<SampleManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<SampleManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SampleManifestEntry e = entry_from_json(line);
    auto resolve = [&](std::string& p) {
      if (!p.empty() && !fs::path(p).is_absolute()) p = (base / p).string();
    };
    resolve(e.anchor_path);
    resolve(e.mixture_path);
    resolve(e.target_path);
    for (auto& p : e.interferer_paths) resolve(p);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw RuntimeError("empty manifest: " + path);
  return out;
}

ToyCorpus build_toy_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
  if (cfg.n_speakers < 2) throw UsageError("build_toy_corpus: need >= 2 speakers");
  if (cfg.utts_per_speaker < 1) throw UsageError("build_toy_corpus: need >= 1 utterance");
  if (cfg.n_interferers < 1) throw UsageError("build_toy_corpus: need >= 1 interferer");
  if (cfg.sir_max < cfg.sir_min) throw UsageError("build_toy_corpus: bad SIR range");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec || !fs::is_directory(fs::path(out_dir) / "wav"))
    throw RuntimeError("cannot create output directory: " + out_dir);

  const int n_test = std::max(2, cfg.n_speakers / 2);
  const int n_pool = std::max(cfg.n_interferers + 1, cfg.n_speakers / 2);
  const int total = cfg.n_speakers + n_test + n_pool;

  // Log-spaced fundamentals with per-speaker jitter, shuffled before the
  // train/test/interferer split so every pool covers the full f0 range.
  std::mt19937_64 rng(cfg.seed);
  std::vector<ToySpeakerSpec> specs(total);
  for (int i = 0; i < total; ++i) {
    auto& s = specs[i];
    const double frac = total > 1 ? double(i) / (total - 1) : 0.0;
    s.f0_hz = 90.0 * std::pow(320.0 / 90.0, frac) * (1.0 + 0.02 * (next_unit(rng) - 0.5));
    s.harmonic_decay = 0.35 + 0.2 * next_unit(rng);
    s.formant_center_hz = 600.0 + 2000.0 * next_unit(rng);
    s.am_rate_hz = 2.0 + 6.0 * next_unit(rng);
  }
  std::vector<int> order(total);
  for (int i = 0; i < total; ++i) order[i] = i;
  for (int i = total - 1; i > 0; --i)
    std::swap(order[i], order[int(next_unit(rng) * (i + 1))]);
  for (int i = 0; i < total; ++i) specs[order[i]].speaker_id = "spk" + std::to_string(i);

  std::vector<ToySpeakerSpec> train_spk(specs.begin(), specs.begin() + cfg.n_speakers);
  std::vector<ToySpeakerSpec> test_spk(specs.begin() + cfg.n_speakers,
                                       specs.begin() + cfg.n_speakers + n_test);
  std::vector<ToySpeakerSpec> pool(specs.begin() + cfg.n_speakers + n_test, specs.end());

  auto make_split = [&](const std::vector<ToySpeakerSpec>& targets,
                        const std::string& tag, uint64_t salt) {
    std::vector<SampleManifestEntry> entries;
    for (size_t si = 0; si < targets.size(); ++si) {
      for (int u = 0; u < cfg.utts_per_speaker; ++u) {
        const uint64_t base = mix_seed(cfg.seed, salt, si, uint64_t(u));
        std::mt19937_64 urng(base);

        // Session-level wobble around the speaker's parameters: the network
        // sees a continuum of voices instead of a handful of fixed spectra,
        // so held-out speakers stay in distribution. The wobble is wide
        // enough that neighbouring speakers' sessions overlap, which forces
        // the model to condition on the anchor instead of memorizing voices.
        auto wobble = [&](ToySpeakerSpec s) {
          s.f0_hz = std::clamp(s.f0_hz * (1.0 + 0.3 * (next_unit(urng) - 0.5)),
                               80.0, 400.0);
          s.harmonic_decay += 0.20 * (next_unit(urng) - 0.5);
          s.formant_center_hz = std::clamp(
              s.formant_center_hz + 1600.0 * (next_unit(urng) - 0.5), 300.0,
              3400.0);
          s.am_rate_hz =
              std::max(0.8, s.am_rate_hz + 6.0 * (next_unit(urng) - 0.5));
          return s;
        };
        const ToySpeakerSpec spk = wobble(targets[si]);

        const Waveform anchor = synth_speaker_utterance(spk, cfg.anchor_s, base + 1);
        Waveform target = synth_speaker_utterance(spk, cfg.utterance_s, base + 2);

        std::vector<Waveform> ints;
        std::vector<std::string> int_ids;
        std::vector<int> used;
        for (int j = 0; j < cfg.n_interferers; ++j) {
          int pick;
          do {
            pick = int(next_unit(urng) * double(pool.size()));
            pick = std::min(pick, int(pool.size()) - 1);
          } while (std::count(used.begin(), used.end(), pick));
          used.push_back(pick);
          // Redraw the session wobble until the interferer's fundamental is
          // spectrally resolvable from the target's; mixtures of near-equal
          // pitches have no recoverable target even for an ideal mask.
          ToySpeakerSpec ispk = wobble(pool[pick]);
          for (int attempt = 0;
               attempt < 50 &&
               std::abs(std::log(ispk.f0_hz / spk.f0_hz)) < 0.30;
               ++attempt)
            ispk = wobble(pool[pick]);
          ints.push_back(synth_speaker_utterance(ispk, cfg.interferer_s,
                                                 base + 10 + uint64_t(j)));
          int_ids.push_back(ispk.speaker_id);
        }
        const double sir = cfg.sir_min + (cfg.sir_max - cfg.sir_min) * next_unit(urng);
        std::vector<Waveform> scaled;
        Waveform mix = mix_at_sir(target, ints, sir, &scaled);

        // Rescale everything by a common factor if the mix would clip; the
        // mixture stays the exact sample-wise sum of the written sources.
        double peak = 0.0;
        for (double x : mix.samples) peak = std::max(peak, std::abs(x));
        if (peak > 0.99) {
          const double g = 0.99 / peak;
          for (auto& x : mix.samples) x *= g;
          for (auto& x : target.samples) x *= g;
          for (auto& s : scaled)
            for (auto& x : s.samples) x *= g;
        }
        Waveform tgt_trim = target;
        tgt_trim.samples.resize(mix.samples.size());

        SampleManifestEntry e;
        e.id = tag + "_" + spk.speaker_id + "_utt" + std::to_string(u);
        e.speaker_id = spk.speaker_id;
        e.sir_db = sir;
        e.anchor_path = "wav/" + e.id + "_anchor.wav";
        e.target_path = "wav/" + e.id + "_target.wav";
        e.mixture_path = "wav/" + e.id + "_mix.wav";
        write_wav((fs::path(out_dir) / e.anchor_path).string(), anchor);
        write_wav((fs::path(out_dir) / e.target_path).string(), tgt_trim);
        write_wav((fs::path(out_dir) / e.mixture_path).string(), mix);
        for (size_t j = 0; j < scaled.size(); ++j) {
          std::string rel = "wav/" + e.id + "_int" + std::to_string(j) + ".wav";
          write_wav((fs::path(out_dir) / rel).string(), scaled[j]);
          e.interferer_paths.push_back(rel);
        }
        entries.push_back(std::move(e));
      }
    }
    return entries;
  };

  const auto train_entries = make_split(train_spk, "train", 11);
  const auto test_entries = make_split(test_spk, "test", 22);

  ToyCorpus out;
  out.train_manifest = (fs::path(out_dir) / "train.jsonl").string();
  out.test_manifest = (fs::path(out_dir) / "test.jsonl").string();
  write_manifest(out.train_manifest, train_entries);
  write_manifest(out.test_manifest, test_entries);
  return out;
}

}  // namespace dxnet
