// Command-line front end; all heavy lifting goes through the C API.
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dxnet.h"

using nlohmann::json;

namespace {

int report_error(dxnet_status st) {
  std::fprintf(stderr, "error: %s\n", dxnet_last_error());
  return st == DXNET_ERR_USAGE ? 1 : 2;
}

// Optional JSON config mirroring flag names; explicit flags win.
json load_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) {
        std::fprintf(stderr, "error: cannot open config file %s\n", argv[i + 1]);
        std::exit(1);
      }
      try {
        return json::parse(in);
      } catch (const json::exception& e) {
        std::fprintf(stderr, "error: bad config JSON: %s\n", e.what());
        std::exit(1);
      }
    }
  }
  return json::object();
}

std::string csv_sibling(const std::string& json_path) {
  auto dot = json_path.rfind('.');
  return (dot == std::string::npos ? json_path : json_path.substr(0, dot)) + ".csv";
}

}  // namespace

int main(int argc, char** argv) {
  const json cfg = load_config(argc, argv);
  auto dget = [&cfg](const char* key, auto fallback) {
    using T = decltype(fallback);
    return cfg.contains(key) ? cfg[key].get<T>() : fallback;
  };

  CLI::App app{"dxnet: anchor-driven target-speaker extraction toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config mirroring flag names");

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "Synthesize the toy corpus");
  std::string mk_out = dget("out", std::string());
  int mk_speakers = dget("speakers", 8);
  int mk_utts = dget("utts", 25);
  double mk_sir_min = dget("sir-min", 0.0);
  double mk_sir_max = dget("sir-max", 10.0);
  int mk_interferers = dget("interferers", 1);
  uint64_t mk_seed = dget("seed", uint64_t(1));
  mk->add_option("--out", mk_out, "Output directory")->required();
  mk->add_option("--speakers", mk_speakers, "Train target speakers");
  mk->add_option("--utts", mk_utts, "Utterances per speaker");
  mk->add_option("--sir-min", mk_sir_min, "Minimum SIR (dB)");
  mk->add_option("--sir-max", mk_sir_max, "Maximum SIR (dB)");
  mk->add_option("--interferers", mk_interferers, "Interferers per mixture");
  mk->add_option("--seed", mk_seed, "RNG seed");

  // train
  auto* tr = app.add_subcommand("train", "Train a model variant");
  std::string tr_manifest = dget("manifest", std::string());
  std::string tr_variant = dget("variant", std::string("denet"));
  std::string tr_preset = dget("preset", std::string("desk"));
  int tr_epochs = dget("epochs", 20);
  int tr_batch = dget("batch-size", 0);
  double tr_lr = dget("lr", 0.0);
  uint64_t tr_seed = dget("seed", uint64_t(1));
  std::string tr_out = dget("out", std::string());
  tr->add_option("--manifest", tr_manifest, "Training manifest (JSON lines)")->required();
  tr->add_option("--variant", tr_variant, "denet | danet | danet_anchor");
  tr->add_option("--preset", tr_preset, "paper | desk | tiny");
  tr->add_option("--epochs", tr_epochs, "Training epochs");
  tr->add_option("--batch-size", tr_batch, "Batch size");
  tr->add_option("--lr", tr_lr, "Learning rate");
  tr->add_option("--seed", tr_seed, "RNG seed");
  tr->add_option("--out", tr_out, "Output checkpoint path")->required();

  // extract
  auto* ex = app.add_subcommand("extract", "Extract the target from a mixture");
  std::string ex_ckpt = dget("ckpt", std::string());
  std::string ex_anchor = dget("anchor", std::string());
  std::string ex_mixture = dget("mixture", std::string());
  std::string ex_out = dget("out", std::string());
  std::string ex_mode = dget("mode", std::string("preset"));
  ex->add_option("--ckpt", ex_ckpt, "Checkpoint")->required();
  ex->add_option("--anchor", ex_anchor, "Anchor WAV");
  ex->add_option("--mixture", ex_mixture, "Mixture WAV")->required();
  ex->add_option("--out", ex_out, "Output WAV")->required();
  ex->add_option("--mode", ex_mode, "preset | anchor | nearest");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string ev_ckpt = dget("ckpt", std::string());
  std::string ev_manifest = dget("manifest", std::string());
  std::string ev_mode = dget("mode", std::string("preset"));
  std::string ev_report = dget("report", std::string());
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "Evaluation manifest")->required();
  ev->add_option("--mode", ev_mode, "preset | oracle | anchor | nearest | danet-oracle");
  ev->add_option("--report", ev_report, "Report JSON path (CSV mirror alongside)")->required();

  // dump-embeddings
  auto* de = app.add_subcommand("dump-embeddings",
                                "Canonical-space PCA diagnostics CSV");
  std::string de_ckpt = dget("ckpt", std::string());
  std::string de_anchor = dget("anchor", std::string());
  std::string de_mixture = dget("mixture", std::string());
  std::string de_target = dget("target", std::string());
  std::string de_interferer = dget("interferer", std::string());
  std::string de_out = dget("out", std::string());
  de->add_option("--ckpt", de_ckpt, "denet checkpoint")->required();
  de->add_option("--anchor", de_anchor, "Anchor WAV")->required();
  de->add_option("--mixture", de_mixture, "Mixture WAV")->required();
  de->add_option("--target", de_target, "Target reference WAV")->required();
  de->add_option("--interferer", de_interferer, "Interferer reference WAV")->required();
  de->add_option("--out", de_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (mk->parsed()) {
    dxnet_dataset_opts o{mk_out.c_str(), mk_speakers, mk_utts,
                         mk_sir_min,     mk_sir_max,  mk_interferers, mk_seed};
    const auto st = dxnet_make_dataset(&o);
    return st == DXNET_OK ? 0 : report_error(st);
  }

  if (tr->parsed()) {
    dxnet_train_opts o{};
    o.manifest_path = tr_manifest.c_str();
    o.variant = tr_variant.c_str();
    o.preset = tr_preset.c_str();
    o.epochs = tr_epochs;
    o.batch_size = tr_batch;
    o.learning_rate = tr_lr;
    o.seed = tr_seed;
    o.out_checkpoint = tr_out.c_str();
    o.on_epoch = [](int epoch, double loss, void*) {
      std::printf("epoch=%d loss=%.8f\n", epoch, loss);
      std::fflush(stdout);
    };
    const auto st = dxnet_train(&o);
    return st == DXNET_OK ? 0 : report_error(st);
  }

  dxnet_checkpoint* ck = nullptr;
  const std::string ckpt_path =
      ex->parsed() ? ex_ckpt : ev->parsed() ? ev_ckpt : de_ckpt;
  auto st = dxnet_checkpoint_open(ckpt_path.c_str(), &ck);
  if (st != DXNET_OK) return report_error(st);

  if (ex->parsed()) {
    st = dxnet_extract(ck, ex_anchor.empty() ? nullptr : ex_anchor.c_str(),
                       ex_mixture.c_str(), ex_mode.c_str(), ex_out.c_str());
  } else if (ev->parsed()) {
    const std::string csv = csv_sibling(ev_report);
    st = dxnet_eval(ck, ev_manifest.c_str(), ev_mode.c_str(), ev_report.c_str(),
                    csv.c_str());
  } else {
    st = dxnet_dump_embeddings(ck, de_anchor.c_str(), de_mixture.c_str(),
                               de_target.c_str(), de_interferer.c_str(),
                               de_out.c_str());
  }
  dxnet_checkpoint_close(ck);
  return st == DXNET_OK ? 0 : report_error(st);
}
