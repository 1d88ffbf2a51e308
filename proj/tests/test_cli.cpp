#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = METRICFORGE_CLI_PATH;

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args;
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const {
    return (dir / leaf).string();
  }
};

}  // namespace

TEST_CASE("gen-data writes a deterministic CSV and validates flags") {
  Scratch scratch("cli_gen_data");
  const std::string a = scratch / "a.csv";
  const std::string b = scratch / "b.csv";
  CHECK(run("gen-data --classes 8 --per-class 50 --dim 32 --spread 0.15"
            " --seed 7 --out " + a + " > /dev/null") == 0);
  REQUIRE(fs::exists(a));
  const std::string contents = slurp(a);
  // header + 400 rows
  CHECK(std::count(contents.begin(), contents.end(), '\n') == 401);
  CHECK(contents.rfind("id,label,f0,", 0) == 0);

  CHECK(run("gen-data --classes 8 --per-class 50 --dim 32 --spread 0.15"
            " --seed 7 --out " + b + " > /dev/null") == 0);
  CHECK(slurp(b) == contents);  // byte identical

  CHECK(run("gen-data --classes 1 --out " + (scratch / "bad.csv") +
            " 2> /dev/null") == 2);
}

TEST_CASE("gen-data falls back to the METRIC_FORGE_SEED environment variable") {
  Scratch scratch("cli_env_seed");
  const std::string a = scratch / "a.csv";
  const std::string b = scratch / "b.csv";
  const std::string c = scratch / "c.csv";
  const std::string base = "gen-data --classes 2 --per-class 3 --dim 4 --out ";
  CHECK(run(base + a + " > /dev/null", "METRIC_FORGE_SEED=5") == 0);
  CHECK(run(base + b + " > /dev/null", "METRIC_FORGE_SEED=5") == 0);
  CHECK(run(base + c + " > /dev/null", "METRIC_FORGE_SEED=6") == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
}

TEST_CASE("train produces its three artifacts and a byte-identical rerun") {
  Scratch scratch("cli_train");
  const std::string data = scratch / "data.csv";
  REQUIRE(run("gen-data --classes 4 --per-class 8 --dim 8 --spread 0.1"
              " --seed 3 --out " + data + " > /dev/null") == 0);

  const std::string config_path = scratch / "run.json";
  {
    std::ofstream config(config_path);
    config << R"({
      "schema": 1,
      "seed": 7,
      "data": {"path": ")" << data << R"("},
      "loss": {"name": "triplet"},
      "train": {"epochs": 4, "batch_size": 8, "embedding_dim": 6,
                "learning_rate": 0.1}
    })";
  }

  const std::string out1 = scratch / "out1";
  const std::string out2 = scratch / "out2";
  CHECK(run("train --config " + config_path + " --out " + out1 +
            " > /dev/null") == 0);
  CHECK(fs::exists(fs::path(out1) / "history.csv"));
  CHECK(fs::exists(fs::path(out1) / "embeddings.csv"));
  CHECK(fs::exists(fs::path(out1) / "report.json"));

  CHECK(run("train --config " + config_path + " --out " + out2 +
            " > /dev/null") == 0);
  CHECK(slurp(fs::path(out1) / "history.csv") ==
        slurp(fs::path(out2) / "history.csv"));
  CHECK(slurp(fs::path(out1) / "embeddings.csv") ==
        slurp(fs::path(out2) / "embeddings.csv"));

  // Loss/sampler mismatch is a config error.
  CHECK(run("train --config " + config_path +
            " --loss npair --sampler uniform 2> /dev/null") == 2);

  // proxygml with M=2, K=4 on C=4 data satisfies K <= M*C.
  CHECK(run("train --config " + config_path +
            " --loss proxygml --M 2 --K 4 --out " + (scratch / "gml") +
            " > /dev/null") == 0);
  // And K beyond M*C is rejected.
  CHECK(run("train --config " + config_path +
            " --loss proxygml --M 2 --K 9 2> /dev/null") == 2);
}

TEST_CASE("eval reports retrieval quality and fails cleanly on bad input") {
  Scratch scratch("cli_eval");
  // Perfect clusters: duplicate rows per class.
  const std::string emb = scratch / "emb.csv";
  {
    std::ofstream out(emb);
    out << "id,label,f0,f1\n";
    out << "0,0,1,0\n1,0,1,0\n2,1,0,1\n3,1,0,1\n";
  }
  const std::string report_path = scratch / "report.json";
  CHECK(run("eval --embeddings " + emb + " --ks 1 2 3 --out " + report_path) ==
        0);
  const auto report = nlohmann::json::parse(slurp(report_path));
  CHECK(report["recall_at_k"]["1"].get<double>() == 1.0);
  CHECK(report["recall_at_k"]["1"].get<double>() <=
        report["recall_at_k"]["2"].get<double>());
  CHECK(report["recall_at_k"]["2"].get<double>() <=
        report["recall_at_k"]["3"].get<double>());

  CHECK(run("eval --embeddings " + (scratch / "missing.csv") +
            " 2> " + (scratch / "err.txt")) == 2);
  CHECK(slurp(scratch / "err.txt").find("missing.csv") != std::string::npos);
}

TEST_CASE("gradcheck exit codes reflect the report") {
  CHECK(run("gradcheck --seeds 0 > /dev/null") == 0);
  CHECK(run("gradcheck --seeds 2 > /dev/null") == 0);
  CHECK(run("gradcheck --seeds 1 --inject-fault > /dev/null") == 4);
}

TEST_CASE("dump-config prints every default explicitly") {
  Scratch scratch("cli_dump");
  const std::string path = scratch / "dump.json";
  CHECK(run("--dump-config > " + path) == 0);
  const auto config = nlohmann::json::parse(slurp(path));
  CHECK(config["schema"] == 1);
  CHECK(config["loss"]["name"] == "triplet");
  CHECK(config["loss"]["alpha"] == 0.2);
  CHECK(config["loss"]["beta"] == 50.0);
  CHECK(config["train"]["learning_rate"] == 0.1);
  CHECK(config["train"]["sampler"] == "two_per_class");
  CHECK(config["eval"]["ks"].size() == 4);
  CHECK(config["language"]["gamma_l"] == 1.0);

  // The effective config for a different loss resolves that loss's defaults.
  const std::string ms_path = scratch / "ms.json";
  CHECK(run("train --loss ms --dump-config > " + ms_path) == 0);
  const auto ms = nlohmann::json::parse(slurp(ms_path));
  CHECK(ms["loss"]["alpha"] == 2.0);
  CHECK(ms["loss"]["lambda"] == 0.5);
}
