#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dsp.hpp"
#include "extractor.hpp"
#include "infer.hpp"
#include "wav.hpp"

using nlohmann::json;

namespace dxnet {

namespace {

constexpr double kCapDb = 100.0;

double projection_ratio_db(const Waveform& est, const Waveform& ref) {
  if (est.samples.size() != ref.samples.size() || ref.samples.empty())
    throw RuntimeError("si_sdr: length mismatch or empty input");
  const auto n = long(ref.samples.size());
  Eigen::Map<const Vec> e(est.samples.data(), n);
  Eigen::Map<const Vec> r(ref.samples.data(), n);
  const double rr = r.squaredNorm();
  if (rr <= 0.0) throw RuntimeError("si_sdr: zero reference");
  const double alpha = e.dot(r) / rr;
  const Vec s = alpha * r;
  const double num = s.squaredNorm();
  const double den = (e - s).squaredNorm();
  if (num <= den * 1e-10) return -kCapDb;
  if (den <= num * 1e-10) return kCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kCapDb, kCapDb);
}

Waveform truncate_pair(const Waveform& w, size_t n) {
  Waveform out = w;
  out.samples.resize(n);
  return out;
}

}  // namespace

double si_sdr(const Waveform& est, const Waveform& ref) {
  return projection_ratio_db(est, ref);
}

double sdr(const Waveform& est, const Waveform& ref) {
  // Single-reference projection decomposition; coincides with SI-SDR.
  return projection_ratio_db(est, ref);
}

size_t oracle_select(const std::vector<Waveform>& streams, const Waveform& ref) {
  if (streams.empty()) throw UsageError("oracle_select: no streams");
  size_t best = 0;
  double best_v = -1e300;
  for (size_t i = 0; i < streams.size(); ++i) {
    const double v = sdr(streams[i], ref);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

EvalReport eval_report(const Checkpoint& ck,
                       const std::vector<SampleManifestEntry>& manifest,
                       const std::string& mode) {
  EvalReport rep;
  rep.mode = mode;
  for (const auto& e : manifest) {
    const Waveform mixture = read_wav(e.mixture_path);
    Waveform ref = read_wav(e.target_path);
    const size_t n = std::min(mixture.samples.size(), ref.samples.size());
    const Waveform mix_t = truncate_pair(mixture, n);
    ref = truncate_pair(ref, n);

    const CMat spec = stft(mixture, ck.stft);
    const Mat mag = magnitude(spec);

    InferInputs in;
    Mat anchor_mag, target_mag;
    std::vector<Mat> interferer_mags;
    if (!e.anchor_path.empty()) {
      anchor_mag = magnitude(stft(read_wav(e.anchor_path), ck.stft));
      in.anchor = &anchor_mag;
    }
    target_mag = magnitude(stft(read_wav(e.target_path), ck.stft));
    for (const auto& p : e.interferer_paths)
      interferer_mags.push_back(magnitude(stft(read_wav(p), ck.stft)));
    in.target = &target_mag;
    in.interferers = &interferer_mags;

    const auto masks = masks_for_mode(ck, mode, mag, in);
    Waveform est;
    if (masks.size() == 1) {
      est = truncate_pair(reconstruct(spec, masks[0], ck.stft, n), n);
    } else {
      std::vector<Waveform> streams;
      for (const auto& m : masks)
        streams.push_back(truncate_pair(reconstruct(spec, m, ck.stft, n), n));
      est = streams[oracle_select(streams, ref)];
    }

    EvalEntryResult r;
    r.id = e.id;
    r.sir_db = e.sir_db;
    r.mix_si_sdr = si_sdr(mix_t, ref);
    r.mix_sdr = sdr(mix_t, ref);
    r.model_si_sdr = si_sdr(est, ref);
    r.model_sdr = sdr(est, ref);

    if (!interferer_mags.empty()) {
      const Mat ym = ideal_membership(target_mag, interferer_mags);
      const Waveform ibm =
          truncate_pair(reconstruct(spec, ym, ck.stft, n), n);
      r.ideal_mask_si_sdr = si_sdr(ibm, ref);
    } else {
      r.ideal_mask_si_sdr = r.mix_si_sdr;
    }
    rep.entries.push_back(std::move(r));
  }

  const double inv = 1.0 / double(rep.entries.size());
  for (const auto& r : rep.entries) {
    rep.mean_mix_si_sdr += r.mix_si_sdr * inv;
    rep.mean_mix_sdr += r.mix_sdr * inv;
    rep.mean_model_si_sdr += r.model_si_sdr * inv;
    rep.mean_model_sdr += r.model_sdr * inv;
    rep.mean_ideal_mask_si_sdr += r.ideal_mask_si_sdr * inv;
  }
  return rep;
}

void write_report_json(const EvalReport& r, const std::string& path) {
  json j;
  j["mode"] = r.mode;
  j["entries"] = json::array();
  for (const auto& e : r.entries) {
    j["entries"].push_back({{"id", e.id},
                            {"sir_db", e.sir_db},
                            {"mix_si_sdr", e.mix_si_sdr},
                            {"mix_sdr", e.mix_sdr},
                            {"model_si_sdr", e.model_si_sdr},
                            {"model_sdr", e.model_sdr},
                            {"ideal_mask_si_sdr", e.ideal_mask_si_sdr}});
  }
  j["aggregate"] = {{"mix_si_sdr", r.mean_mix_si_sdr},
                    {"mix_sdr", r.mean_mix_sdr},
                    {"model_si_sdr", r.mean_model_si_sdr},
                    {"model_sdr", r.mean_model_sdr},
                    {"ideal_mask_si_sdr", r.mean_ideal_mask_si_sdr}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

void write_report_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write report: " + path);
  out << "id,sir_db,mix_si_sdr,mix_sdr,model_si_sdr,model_sdr,ideal_mask_si_sdr\n";
  out.precision(12);
  for (const auto& e : r.entries)
    out << e.id << ',' << e.sir_db << ',' << e.mix_si_sdr << ',' << e.mix_sdr
        << ',' << e.model_si_sdr << ',' << e.model_sdr << ','
        << e.ideal_mask_si_sdr << "\n";
}

}  // namespace dxnet
