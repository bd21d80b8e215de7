#include "dxnet.h"

#include <cstdlib>
#include <string>

#include "core/data.hpp"
#include "core/infer.hpp"
#include "core/metrics.hpp"
#include "core/net.hpp"
#include "core/train.hpp"

namespace {

thread_local std::string g_last_error = "ok";

dxnet_status fail(dxnet_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
dxnet_status guarded(Fn&& fn) {
  try {
    fn();
    return DXNET_OK;
  } catch (const dxnet::UsageError& e) {
    return fail(DXNET_ERR_USAGE, e.what());
  } catch (const std::exception& e) {
    return fail(DXNET_ERR_RUNTIME, e.what());
  }
}

}  // namespace

struct dxnet_checkpoint {
  dxnet::Checkpoint ck;
  std::string variant;
};

extern "C" {

const char* dxnet_last_error(void) { return g_last_error.c_str(); }

dxnet_status dxnet_make_dataset(const dxnet_dataset_opts* opts) {
  if (!opts || !opts->out_dir)
    return fail(DXNET_ERR_USAGE, "make_dataset: missing options");
  return guarded([&] {
    dxnet::CorpusConfig cfg;
    cfg.n_speakers = opts->n_speakers;
    cfg.utts_per_speaker = opts->utts_per_speaker;
    cfg.sir_min = opts->sir_min_db;
    cfg.sir_max = opts->sir_max_db;
    cfg.n_interferers = opts->n_interferers;
    cfg.seed = opts->seed;
    dxnet::build_toy_corpus(cfg, opts->out_dir);
  });
}

dxnet_status dxnet_train(const dxnet_train_opts* opts) {
  if (!opts || !opts->manifest_path || !opts->variant || !opts->preset ||
      !opts->out_checkpoint)
    return fail(DXNET_ERR_USAGE, "train: missing options");
  return guarded([&] {
    dxnet::TrainConfig cfg;
    cfg.variant = dxnet::variant_from_string(opts->variant);
    cfg.preset = opts->preset;
    cfg.epochs = opts->epochs;
    if (opts->batch_size > 0) cfg.batch_size = opts->batch_size;
    if (opts->learning_rate > 0.0) cfg.learning_rate = opts->learning_rate;
    cfg.seed = opts->seed;
    if (cfg.variant == dxnet::Variant::danet)
      cfg.curriculum = dxnet::Curriculum::frames_100_then_400;
    cfg.resolve();  // surface configuration errors before touching any files
    const auto manifest = dxnet::read_manifest(opts->manifest_path);
    dxnet::EpochCallback cb;
    if (opts->on_epoch) {
      cb = [opts](int epoch, double loss) {
        opts->on_epoch(epoch, loss, opts->user);
      };
    }
    const auto ck = dxnet::train(manifest, cfg, cb);
    dxnet::save_checkpoint(ck, opts->out_checkpoint);
  });
}

dxnet_status dxnet_checkpoint_open(const char* path, dxnet_checkpoint** out) {
  if (!path || !out) return fail(DXNET_ERR_USAGE, "checkpoint_open: null argument");
  *out = nullptr;
  return guarded([&] {
    auto* h = new dxnet_checkpoint;
    try {
      h->ck = dxnet::load_checkpoint(path);
    } catch (...) {
      delete h;
      throw;
    }
    h->variant = dxnet::to_string(h->ck.params.cfg.variant);
    *out = h;
  });
}

void dxnet_checkpoint_close(dxnet_checkpoint* ck) { delete ck; }

const char* dxnet_checkpoint_variant(const dxnet_checkpoint* ck) {
  return ck ? ck->variant.c_str() : "";
}

dxnet_status dxnet_extract(const dxnet_checkpoint* ck, const char* anchor_wav,
                           const char* mixture_wav, const char* mode,
                           const char* out_wav) {
  if (!ck || !mixture_wav || !mode || !out_wav)
    return fail(DXNET_ERR_USAGE, "extract: null argument");
  return guarded([&] {
    dxnet::extract_to_wav(ck->ck, anchor_wav ? anchor_wav : "", mixture_wav,
                          mode, out_wav);
  });
}

dxnet_status dxnet_eval(const dxnet_checkpoint* ck, const char* manifest_path,
                        const char* mode, const char* report_json,
                        const char* report_csv) {
  if (!ck || !manifest_path || !mode || !report_json)
    return fail(DXNET_ERR_USAGE, "eval: null argument");
  return guarded([&] {
    const auto manifest = dxnet::read_manifest(manifest_path);
    const auto rep = dxnet::eval_report(ck->ck, manifest, mode);
    dxnet::write_report_json(rep, report_json);
    if (report_csv) dxnet::write_report_csv(rep, report_csv);
  });
}

dxnet_status dxnet_dump_embeddings(const dxnet_checkpoint* ck,
                                   const char* anchor_wav,
                                   const char* mixture_wav,
                                   const char* target_wav,
                                   const char* interferer_wav,
                                   const char* out_csv) {
  if (!ck || !anchor_wav || !mixture_wav || !target_wav || !interferer_wav ||
      !out_csv)
    return fail(DXNET_ERR_USAGE, "dump_embeddings: null argument");
  return guarded([&] {
    dxnet::dump_embeddings(ck->ck, anchor_wav, mixture_wav, target_wav,
                           interferer_wav, out_csv);
  });
}

}  // extern "C"
