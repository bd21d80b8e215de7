#pragma once

#include <string>
#include <vector>

#include "data.hpp"
#include "train.hpp"
#include "types.hpp"

namespace dxnet {

// Scale-invariant SDR in dB, capped at +/-100.
double si_sdr(const Waveform& est, const Waveform& ref);

// Single-reference projection SDR (identical formula; kept as the reported
// "SDR" column).
double sdr(const Waveform& est, const Waveform& ref);

// Index of the stream with the best SDR against ref; ties go to the lowest.
size_t oracle_select(const std::vector<Waveform>& streams, const Waveform& ref);

struct EvalEntryResult {
  std::string id;
  double sir_db = 0.0;
  double mix_si_sdr = 0.0;
  double mix_sdr = 0.0;
  double model_si_sdr = 0.0;
  double model_sdr = 0.0;
  double ideal_mask_si_sdr = 0.0;
};

struct EvalReport {
  std::string mode;
  std::vector<EvalEntryResult> entries;
  double mean_mix_si_sdr = 0.0;
  double mean_mix_sdr = 0.0;
  double mean_model_si_sdr = 0.0;
  double mean_model_sdr = 0.0;
  double mean_ideal_mask_si_sdr = 0.0;
};

// mode: preset | oracle | anchor | nearest | danet-oracle
EvalReport eval_report(const Checkpoint& ck,
                       const std::vector<SampleManifestEntry>& manifest,
                       const std::string& mode);

void write_report_json(const EvalReport& r, const std::string& path);
void write_report_csv(const EvalReport& r, const std::string& path);

}  // namespace dxnet
