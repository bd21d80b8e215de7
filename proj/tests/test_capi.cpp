#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <dxnet.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct TmpDir {
  std::string path;
  explicit TmpDir(std::string p) : path(std::move(p)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const {
    return path + "/" + leaf;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

}  // namespace

TEST_CASE("full pipeline through the shared library") {
  TmpDir dir("capi_tmp");

  dxnet_dataset_opts ds{};
  ds.out_dir = dir.path.c_str();
  ds.n_speakers = 2;
  ds.utts_per_speaker = 3;
  ds.sir_min_db = 0.0;
  ds.sir_max_db = 5.0;
  ds.n_interferers = 1;
  ds.seed = 17;
  REQUIRE(dxnet_make_dataset(&ds) == DXNET_OK);
  const std::string train_manifest = dir / "train.jsonl";
  const std::string test_manifest = dir / "test.jsonl";
  REQUIRE(fs::exists(train_manifest));
  REQUIRE(fs::exists(test_manifest));

  struct EpochLog {
    std::vector<double> losses;
  } log;
  dxnet_train_opts tr{};
  tr.manifest_path = train_manifest.c_str();
  tr.variant = "denet";
  tr.preset = "tiny";
  tr.epochs = 3;
  tr.batch_size = 2;
  tr.learning_rate = 0.0;  // default
  tr.seed = 1;
  const std::string ckpath = dir / "denet.ckpt";
  tr.out_checkpoint = ckpath.c_str();
  tr.on_epoch = [](int, double loss, void* user) {
    static_cast<EpochLog*>(user)->losses.push_back(loss);
  };
  tr.user = &log;
  REQUIRE(dxnet_train(&tr) == DXNET_OK);
  CHECK(log.losses.size() == 3);
  REQUIRE(fs::exists(ckpath));

  dxnet_checkpoint* ck = nullptr;
  REQUIRE(dxnet_checkpoint_open(ckpath.c_str(), &ck) == DXNET_OK);
  REQUIRE(ck != nullptr);
  CHECK(std::string(dxnet_checkpoint_variant(ck)) == "denet");

  // Pull one test entry's paths out of the manifest by hand.
  std::ifstream mf(test_manifest);
  std::string line;
  REQUIRE(std::getline(mf, line));
  auto field = [&](const char* key) {
    const std::string pat = std::string("\"") + key + "\":\"";
    const auto at = line.find(pat);
    REQUIRE(at != std::string::npos);
    const auto start = at + pat.size();
    return dir / line.substr(start, line.find('"', start) - start);
  };
  const std::string anchor = field("anchor_path");
  const std::string mixture = field("mixture_path");

  const std::string out = dir / "out_preset.wav";
  REQUIRE(dxnet_extract(ck, anchor.c_str(), mixture.c_str(), "preset",
                        out.c_str()) == DXNET_OK);
  CHECK(fs::exists(out));
  CHECK(fs::file_size(out) > 1000);

  // The other modes belong to the danet variants.
  for (const char* mode : {"anchor", "nearest"}) {
    CHECK(dxnet_extract(ck, anchor.c_str(), mixture.c_str(), mode,
                        (dir / "bad.wav").c_str()) == DXNET_ERR_USAGE);
  }

  const std::string report = dir / "report.json";
  const std::string report_csv = dir / "report.csv";
  REQUIRE(dxnet_eval(ck, test_manifest.c_str(), "preset", report.c_str(),
                     report_csv.c_str()) == DXNET_OK);
  const std::string jtxt = slurp(report);
  CHECK(jtxt.find("\"aggregate\"") != std::string::npos);
  CHECK(jtxt.find("model_si_sdr") != std::string::npos);
  CHECK(jtxt.find("\"mode\"") != std::string::npos);
  CHECK(slurp(report_csv).find("model_si_sdr") != std::string::npos);
  // CSV is optional.
  REQUIRE(dxnet_eval(ck, test_manifest.c_str(), "oracle", report.c_str(),
                     nullptr) == DXNET_OK);

  const std::string target = field("target_path");
  std::string interferer;
  {
    const std::string pat = "\"interferer_paths\":[\"";
    const auto at = line.find(pat);
    REQUIRE(at != std::string::npos);
    const auto start = at + pat.size();
    interferer = dir / line.substr(start, line.find('"', start) - start);
  }
  const std::string embed_csv = dir / "embed.csv";
  REQUIRE(dxnet_dump_embeddings(ck, anchor.c_str(), mixture.c_str(),
                                target.c_str(), interferer.c_str(),
                                embed_csv.c_str()) == DXNET_OK);
  const std::string csv = slurp(embed_csv);
  CHECK(csv.rfind("label,pc1,pc2,pc3", 0) == 0);
  CHECK(csv.find("extractor") != std::string::npos);
  CHECK(csv.find("target_bin") != std::string::npos);

  dxnet_checkpoint_close(ck);
}

TEST_CASE("danet variant round trip and danet-oracle eval") {
  TmpDir dir("capi_tmp2");
  dxnet_dataset_opts ds{};
  ds.out_dir = dir.path.c_str();
  ds.n_speakers = 2;
  ds.utts_per_speaker = 2;
  ds.sir_min_db = 0.0;
  ds.sir_max_db = 5.0;
  ds.n_interferers = 1;
  ds.seed = 23;
  REQUIRE(dxnet_make_dataset(&ds) == DXNET_OK);

  dxnet_train_opts tr{};
  const std::string train_manifest = dir / "train.jsonl";
  const std::string ckpath = dir / "danet.ckpt";
  tr.manifest_path = train_manifest.c_str();
  tr.variant = "danet";
  tr.preset = "tiny";
  tr.epochs = 2;
  tr.seed = 2;
  tr.out_checkpoint = ckpath.c_str();
  REQUIRE(dxnet_train(&tr) == DXNET_OK);

  dxnet_checkpoint* ck = nullptr;
  REQUIRE(dxnet_checkpoint_open(ckpath.c_str(), &ck) == DXNET_OK);
  CHECK(std::string(dxnet_checkpoint_variant(ck)) == "danet");

  const std::string report = dir / "danet_report.json";
  const std::string test_manifest = dir / "test.jsonl";
  REQUIRE(dxnet_eval(ck, test_manifest.c_str(), "danet-oracle", report.c_str(),
                     nullptr) == DXNET_OK);
  CHECK(slurp(report).find("danet-oracle") != std::string::npos);

  // preset mode needs a denet checkpoint.
  CHECK(dxnet_eval(ck, test_manifest.c_str(), "preset", report.c_str(),
                   nullptr) == DXNET_ERR_USAGE);
  CHECK(std::strlen(dxnet_last_error()) > 0);
  dxnet_checkpoint_close(ck);
}

TEST_CASE("error paths set status and message") {
  CHECK(dxnet_make_dataset(nullptr) == DXNET_ERR_USAGE);
  CHECK(std::strlen(dxnet_last_error()) > 0);

  dxnet_dataset_opts ds{};
  ds.out_dir = "capi_tmp_err";
  ds.n_speakers = 1;  // too few
  ds.utts_per_speaker = 1;
  ds.n_interferers = 1;
  ds.seed = 1;
  CHECK(dxnet_make_dataset(&ds) == DXNET_ERR_USAGE);
  fs::remove_all("capi_tmp_err");

  dxnet_checkpoint* ck = nullptr;
  CHECK(dxnet_checkpoint_open("no_such_file.ckpt", &ck) == DXNET_ERR_RUNTIME);
  CHECK(ck == nullptr);

  dxnet_train_opts tr{};
  tr.manifest_path = "missing.jsonl";
  tr.variant = "denet";
  tr.preset = "tiny";
  tr.epochs = 1;
  tr.out_checkpoint = "never.ckpt";
  CHECK(dxnet_train(&tr) == DXNET_ERR_RUNTIME);

  tr.variant = "not_a_variant";
  CHECK(dxnet_train(&tr) == DXNET_ERR_USAGE);
  tr.variant = "denet";
  tr.epochs = 0;
  CHECK(dxnet_train(&tr) == DXNET_ERR_USAGE);
}
