#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "kgt/features.hpp"
#include "kgt/synthetic.hpp"

namespace fs = std::filesystem;
using namespace kgt;

namespace {

struct CliEnv {
  fs::path root;
  fs::path dataset;

  CliEnv() {
    root = fs::temp_directory_path() /
           ("kgt_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    dataset = root / "data";
    SynthConfig cfg;
    cfg.entities = 16;
    cfg.types = 4;
    cfg.semantic_relations = 2;
    cfg.struct_relations = 1;
    write_synthetic_dataset(make_synthetic_dataset(cfg), dataset);
    std::ofstream config(root / "toy.cfg");
    config << "# toy run configuration\n"
           << "d = 16\nlayers = 1\nheads = 2\nffn_mult = 2\nmax_seq_len = 16\n"
           << "lora_rank = 2\ntext_dropout = 0\nstruct_dropout = 0\n"
           << "epochs = 2\nbatch_size = 16\nlearning_rate = 1e-3\n"
           << "kge_dim = 8\nkge_epochs = 4\nkge_batch_size = 64\n";
  }
  ~CliEnv() { fs::remove_all(root); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(KGT_CLI_BIN) + " " + args + " >" +
                            (root / "stdout.log").string() + " 2>" + (root / "stderr.log").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_log() const {
    std::ifstream in(root / "stderr.log");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  std::string stdout_log() const {
    std::ifstream in(root / "stdout.log");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
};

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("cli pipeline runs end to end on the toy dataset") {
  CliEnv env;
  const std::string ds = " --dataset " + env.dataset.string();
  const std::string cfg = " --config " + (env.root / "toy.cfg").string();

  // prepare
  REQUIRE(env.run("prepare" + ds + " --out " + (env.root / "prep").string()) == 0);
  CHECK(fs::exists(env.root / "prep" / "entities.tsv"));
  CHECK(fs::exists(env.root / "prep" / "relations.tsv"));
  CHECK(fs::exists(env.root / "prep" / "filter.tsv"));
  CHECK(fs::exists(env.root / "prep" / "manifest.json"));

  // deterministic offline embedding, twice, byte-identical
  REQUIRE(env.run("embed-text" + ds + cfg + " --offline --dim 24 --out " +
                  (env.root / "text").string()) == 0);
  REQUIRE(env.run("embed-text" + ds + cfg + " --offline --dim 24 --out " +
                  (env.root / "text2").string()) == 0);
  const auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  REQUIRE(bytes(env.root / "text" / "entity_text.kgtf") ==
          bytes(env.root / "text2" / "entity_text.kgtf"));
  REQUIRE(bytes(env.root / "text" / "relation_text.kgtf") ==
          bytes(env.root / "text2" / "relation_text.kgtf"));

  // structural pre-training
  REQUIRE(env.run("train-kge" + ds + cfg + " --out " + (env.root / "kge").string()) == 0);
  CHECK(fs::exists(env.root / "kge" / "entity_struct.kgtf"));
  CHECK(fs::exists(env.root / "kge" / "kge_meta.txt"));

  const std::string feats = " --text-features " + (env.root / "text").string() +
                            " --struct-features " + (env.root / "kge").string();

  // train
  REQUIRE(env.run("train" + ds + cfg + feats + " --out " + (env.root / "run").string()) == 0);
  REQUIRE(fs::exists(env.root / "run" / "final.ckpt"));
  CHECK(fs::exists(env.root / "run" / "train_log.csv"));
  CHECK(count_lines(env.root / "run" / "train_log.csv") == 3);  // header + 2 epochs

  // eval
  REQUIRE(env.run("eval" + ds + feats + " --checkpoint " + (env.root / "run" / "final.ckpt").string() +
                  " --out " + (env.root / "evalrun").string()) == 0);
  CHECK(fs::exists(env.root / "evalrun" / "eval_test.csv"));
  CHECK(fs::exists(env.root / "evalrun" / "eval_test.json"));
  CHECK(env.stdout_log().find("MRR") != std::string::npos);

  // sweep-gamma rescore
  REQUIRE(env.run("sweep-gamma" + ds + feats + " --checkpoint " +
                  (env.root / "run" / "final.ckpt").string() + " --gammas 0.8,1.0,1.4 --out " +
                  (env.root / "sweep").string()) == 0);
  CHECK(count_lines(env.root / "sweep" / "gamma_sweep.csv") == 4);

  // report renders the stored tables
  REQUIRE(env.run("report --run " + (env.root / "run").string()) == 0);
  CHECK(env.stdout_log().find("train_log.csv") != std::string::npos);
}

TEST_CASE("cli errors carry the documented exit codes") {
  CliEnv env;
  const std::string ds = " --dataset " + env.dataset.string();

  SECTION("missing prerequisite names the producing command") {
    const int code = env.run("train" + ds + " --text-features " + (env.root / "nope").string() +
                             " --struct-features " + (env.root / "nope").string() + " --out " +
                             (env.root / "r").string());
    CHECK(code == 3);
    CHECK(env.stderr_log().find("embed-text") != std::string::npos);
  }
  SECTION("unknown config key lists the valid ones") {
    std::ofstream bad(env.root / "bad.cfg");
    bad << "not_a_key = 1\n";
    bad.close();
    const int code = env.run("prepare" + ds + " --config " + (env.root / "bad.cfg").string() +
                             " --out " + (env.root / "p").string());
    CHECK(code == 2);
    CHECK(env.stderr_log().find("not_a_key") != std::string::npos);
    CHECK(env.stderr_log().find("learning_rate") != std::string::npos);
  }
  SECTION("unknown ablation name") {
    const int code = env.run("train" + ds + " --ablation bogus --text-features x --struct-features y "
                             "--out " + (env.root / "r").string());
    CHECK(code == 2);
  }
  SECTION("unknown flag is a usage error") {
    CHECK(env.run("prepare --frobnicate") == 2);
  }
  SECTION("malformed dataset is a data error") {
    fs::create_directories(env.root / "badds");
    std::ofstream t(env.root / "badds" / "train.txt");
    t << "only two\tfields\n";
    t.close();
    std::ofstream(env.root / "badds" / "valid.txt");
    std::ofstream(env.root / "badds" / "test.txt");
    const int code =
        env.run("prepare --dataset " + (env.root / "badds").string() + " --out " +
                (env.root / "p2").string());
    CHECK(code == 3);
  }
  SECTION("prepare honors the train-only policy flag") {
    CHECK(env.run("prepare" + ds + " --policy train-only --out " + (env.root / "p3").string()) == 0);
    CHECK(env.run("prepare" + ds + " --policy sometimes --out " + (env.root / "p4").string()) == 2);
  }
}
