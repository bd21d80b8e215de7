/* dxnet — target-speaker extraction toolkit, C API.
 *
 * All functions return dxnet_status; on failure a thread-local message is
 * available via dxnet_last_error(). Checkpoints are opaque handles.
 */
#ifndef DXNET_H
#define DXNET_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dxnet_status {
  DXNET_OK = 0,
  DXNET_ERR_USAGE = 1,   /* bad arguments or configuration */
  DXNET_ERR_RUNTIME = 2  /* data, I/O or numeric failure */
} dxnet_status;

/* Message for the most recent failure on this thread; never NULL. */
const char* dxnet_last_error(void);

typedef struct dxnet_dataset_opts {
  const char* out_dir;
  int n_speakers;        /* train target speakers, >= 2 */
  int utts_per_speaker;
  double sir_min_db;
  double sir_max_db;
  int n_interferers;
  uint64_t seed;
} dxnet_dataset_opts;

/* Synthesizes the toy corpus and writes train.jsonl / test.jsonl. */
dxnet_status dxnet_make_dataset(const dxnet_dataset_opts* opts);

typedef void (*dxnet_epoch_cb)(int epoch, double mean_loss, void* user);

typedef struct dxnet_train_opts {
  const char* manifest_path;
  const char* variant;     /* denet | danet | danet_anchor */
  const char* preset;      /* paper | desk | tiny */
  int epochs;
  int batch_size;          /* <= 0 for the default */
  double learning_rate;    /* <= 0 for the default */
  uint64_t seed;
  const char* out_checkpoint;
  dxnet_epoch_cb on_epoch; /* optional */
  void* user;
} dxnet_train_opts;

dxnet_status dxnet_train(const dxnet_train_opts* opts);

typedef struct dxnet_checkpoint dxnet_checkpoint;

dxnet_status dxnet_checkpoint_open(const char* path, dxnet_checkpoint** out);
void dxnet_checkpoint_close(dxnet_checkpoint* ck);
/* Variant name; owned by the handle. */
const char* dxnet_checkpoint_variant(const dxnet_checkpoint* ck);

/* mode: preset | anchor | nearest (oracle modes need references, use eval). */
dxnet_status dxnet_extract(const dxnet_checkpoint* ck, const char* anchor_wav,
                           const char* mixture_wav, const char* mode,
                           const char* out_wav);

/* mode: preset | oracle | anchor | nearest | danet-oracle.
 * report_csv may be NULL to skip the CSV mirror. */
dxnet_status dxnet_eval(const dxnet_checkpoint* ck, const char* manifest_path,
                        const char* mode, const char* report_json,
                        const char* report_csv);

dxnet_status dxnet_dump_embeddings(const dxnet_checkpoint* ck,
                                   const char* anchor_wav,
                                   const char* mixture_wav,
                                   const char* target_wav,
                                   const char* interferer_wav,
                                   const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* DXNET_H */
