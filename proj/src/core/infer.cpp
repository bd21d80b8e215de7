#include "infer.hpp"

#include "analysis.hpp"
#include "dsp.hpp"
#include "extractor.hpp"
#include "wav.hpp"

namespace dxnet {

namespace {

Vec anchor_extractor_of(const Checkpoint& ck, const Mat& anchor_mag) {
  const Mat ya = presence_mask(anchor_mag);
  const EmbeddingField va = encode_primary(ck.params, anchor_mag);
  return masked_mean_extractor(va, ya);
}

}  // namespace

std::vector<Mat> masks_for_mode(const Checkpoint& ck, const std::string& mode,
                                const Mat& mixture_mag, const InferInputs& in) {
  const Variant v = ck.params.cfg.variant;
  const EmbeddingField vm = encode_primary(ck.params, mixture_mag);

  if (mode == "preset" || mode == "oracle") {
    if (v != Variant::denet)
      throw UsageError("mode '" + mode + "' requires a denet checkpoint");
    if (!in.anchor) throw UsageError("mode '" + mode + "' requires an anchor");
    const Vec a = anchor_extractor_of(ck, *in.anchor);
    const EmbeddingField vt = map_canonical(ck.params, a, vm);
    Vec extractor;
    if (mode == "preset") {
      if (ck.preset_extractor.size() == 0)
        throw RuntimeError("checkpoint has no preset extractor");
      extractor = ck.preset_extractor;
    } else {
      if (!in.target || !in.interferers || in.interferers->empty())
        throw UsageError("mode 'oracle' requires target and interferer references");
      const Mat ym = ideal_membership(*in.target, *in.interferers);
      extractor = masked_mean_extractor(vt, ym);
    }
    return {similarity_mask(extractor, vt)};
  }

  if (mode == "anchor") {
    if (v != Variant::danet_anchor)
      throw UsageError("mode 'anchor' requires a danet_anchor checkpoint");
    if (!in.anchor) throw UsageError("mode 'anchor' requires an anchor");
    return {similarity_mask(anchor_extractor_of(ck, *in.anchor), vm)};
  }

  if (mode == "nearest") {
    if (v != Variant::danet)
      throw UsageError("mode 'nearest' requires a danet checkpoint");
    if (!in.anchor) throw UsageError("mode 'nearest' requires an anchor");
    const Vec a_ref = anchor_extractor_of(ck, *in.anchor);
    const Vec a = nearest_attractor(ck.fixed_attractor_pair, a_ref);
    return {similarity_mask(a, vm)};
  }

  if (mode == "danet-oracle") {
    if (v != Variant::danet)
      throw UsageError("mode 'danet-oracle' requires a danet checkpoint");
    return {similarity_mask(ck.fixed_attractor_pair.a1, vm),
            similarity_mask(ck.fixed_attractor_pair.a2, vm)};
  }

  throw UsageError("unknown inference mode: " + mode);
}

Waveform reconstruct(const CMat& mix_spec, const Mat& mask, const StftConfig& stft,
                     size_t out_len) {
  const CMat masked = mix_spec.cwiseProduct(mask.cast<std::complex<double>>());
  Waveform w = istft(masked, stft);
  if (w.samples.size() > out_len) w.samples.resize(out_len);
  return w;
}

void extract_to_wav(const Checkpoint& ck, const std::string& anchor_path,
                    const std::string& mixture_path, const std::string& mode,
                    const std::string& out_path) {
  if (mode == "danet-oracle" || mode == "oracle")
    throw UsageError("mode '" + mode +
                     "' needs clean references and is only available via eval");
  const Waveform mixture = read_wav(mixture_path);
  const CMat spec = stft(mixture, ck.stft);
  const Mat mag = magnitude(spec);

  InferInputs in;
  Mat anchor_mag;
  if (!anchor_path.empty()) {
    anchor_mag = magnitude(stft(read_wav(anchor_path), ck.stft));
    in.anchor = &anchor_mag;
  }
  const auto masks = masks_for_mode(ck, mode, mag, in);
  write_wav(out_path, reconstruct(spec, masks[0], ck.stft, mixture.samples.size()));
}

void dump_embeddings(const Checkpoint& ck, const std::string& anchor_path,
                     const std::string& mixture_path,
                     const std::string& target_path,
                     const std::string& interferer_path,
                     const std::string& out_csv) {
  if (ck.params.cfg.variant != Variant::denet)
    throw UsageError("dump-embeddings requires a denet checkpoint");
  if (ck.training_extractors.size() == 0)
    throw RuntimeError("checkpoint stores no training extractors");

  const Mat anchor_mag = magnitude(stft(read_wav(anchor_path), ck.stft));
  const Mat mix_mag = magnitude(stft(read_wav(mixture_path), ck.stft));
  const Mat target_mag = magnitude(stft(read_wav(target_path), ck.stft));
  const Mat interferer_mag = magnitude(stft(read_wav(interferer_path), ck.stft));

  const Vec a = anchor_extractor_of(ck, anchor_mag);
  const EmbeddingField vm = encode_primary(ck.params, mix_mag);
  const EmbeddingField vt = map_canonical(ck.params, a, vm);
  const Mat loud = presence_mask(mix_mag);
  const Mat ym = ideal_membership(target_mag, {interferer_mag});

  std::vector<LabeledPoint> points;
  for (long i = 0; i < ck.training_extractors.rows(); ++i)
    points.push_back({"extractor", ck.training_extractors.row(i).transpose()});
  for (int t = 0; t < vt.T; ++t)
    for (int f = 0; f < vt.F; ++f) {
      if (loud(f, t) < 0.5) continue;
      points.push_back({ym(f, t) > 0.5 ? "target_bin" : "interferer_bin",
                        vt.v.row(t * vt.F + f).transpose()});
    }
  write_embedding_csv(points, out_csv);
}

}  // namespace dxnet
