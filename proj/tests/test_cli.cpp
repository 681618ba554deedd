/* Copyright 2026 the certsmooth authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// End-to-end tests of the command-line tool: exit codes, overwrite refusal,
// config handling, determinism of artifacts, and the documented equivalences
// between methods. Each test drives the real binary through std::system.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "certsmooth/dataset.hpp"
#include "certsmooth/evaluation.hpp"

namespace fs = std::filesystem;
using Catch::Approx;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Sandbox {
 public:
  Sandbox() {
    dir_ = fs::temp_directory_path() /
           ("certsmooth_cli_" + std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~Sandbox() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  fs::path path(const std::string& name) const { return dir_ / name; }

  RunResult run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "_stdout";
    const fs::path err = dir_ / "_stderr";
    const std::string cmd = env + (env.empty() ? "" : " ") +
                            std::string(CERTSMOOTH_CLI_PATH) + " " + args +
                            " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(out);
    result.err = slurp(err);
    return result;
  }

 private:
  static inline int counter_ = 0;
  fs::path dir_;
};

std::string grab_field(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  if (pos == std::string::npos) return "";
  const auto start = pos + key.size() + 1;
  const auto end = text.find_first_of(" \n", start);
  return text.substr(start, end - start);
}

// One tiny end-to-end pipeline shared by several tests.
struct Pipeline {
  Sandbox box;
  std::string train = box.path("train.csv").string();
  std::string test = box.path("test.csv").string();
  std::string base = box.path("base.w").string();
  std::string counts = box.path("counts.csds").string();
  std::string surrogate = box.path("surr.w").string();

  void build() {
    REQUIRE(box.run("gen-data --d 6 --k 3 --train-size 120 --test-size 30 "
                    "--separation 5 --out-train " + train +
                    " --out-test " + test).exit_code == 0);
    REQUIRE(box.run("train-base --train " + train + " --out " + base +
                    " --sigma 0.5 --epochs 25 --hidden 16 --seed 42")
                .exit_code == 0);
    REQUIRE(box.run("sample --train " + train + " --model " + base +
                    " --out " + counts + " --sigma 0.5 --n 400 --seed 42")
                .exit_code == 0);
    REQUIRE(box.run("train-surrogate --train " + train + " --counts " + counts +
                    " --out " + surrogate + " --epochs 25 --hidden 16 --seed 42")
                .exit_code == 0);
  }
};

}  // namespace

TEST_CASE("gen-data is deterministic and refuses to overwrite") {
  Sandbox box;
  const std::string args =
      "gen-data --d 4 --k 2 --train-size 40 --test-size 10 --out-train " +
      box.path("a_train.csv").string() + " --out-test " +
      box.path("a_test.csv").string();
  REQUIRE(box.run(args).exit_code == 0);
  const std::string first = slurp(box.path("a_train.csv"));

  // same config to a fresh path gives identical bytes
  const std::string args_b =
      "gen-data --d 4 --k 2 --train-size 40 --test-size 10 --out-train " +
      box.path("b_train.csv").string() + " --out-test " +
      box.path("b_test.csv").string();
  REQUIRE(box.run(args_b).exit_code == 0);
  REQUIRE(slurp(box.path("b_train.csv")) == first);

  // rerunning without --force refuses, with --force succeeds identically
  const auto refused = box.run(args);
  REQUIRE(refused.exit_code == 1);
  REQUIRE(refused.err.find("--force") != std::string::npos);
  REQUIRE(box.run(args + " --force").exit_code == 0);
  REQUIRE(slurp(box.path("a_train.csv")) == first);
}

TEST_CASE("missing artifacts exit with code 2") {
  Sandbox box;
  const auto result = box.run("train-base --train " +
                              box.path("absent.csv").string() + " --out " +
                              box.path("w.bin").string());
  REQUIRE(result.exit_code == 2);
}

TEST_CASE("malformed artifacts exit with code 3") {
  Sandbox box;
  std::ofstream(box.path("bad.csv")) << "not a dataset\n";
  const auto result = box.run("train-base --train " +
                              box.path("bad.csv").string() + " --out " +
                              box.path("w.bin").string());
  REQUIRE(result.exit_code == 3);
}

TEST_CASE("config files drive defaults and reject unknown keys") {
  Sandbox box;
  std::ofstream(box.path("run.json"))
      << R"({"d": 5, "k": 3, "train_size": 30, "test_size": 12,
             "separation": 4.0, "data_seed": 9,
             "paths": {"train_data": ")" << box.path("t.csv").string()
      << R"(", "test_data": ")" << box.path("e.csv").string() << R"("}})";
  REQUIRE(box.run("gen-data --config " + box.path("run.json").string())
              .exit_code == 0);
  const auto ds = certsmooth::data::load_dataset(box.path("t.csv").string());
  REQUIRE(ds.dim == 5);
  REQUIRE(ds.examples.size() == 30);

  // flag beats config
  REQUIRE(box.run("gen-data --config " + box.path("run.json").string() +
                  " --train-size 18 --force").exit_code == 0);
  REQUIRE(certsmooth::data::load_dataset(box.path("t.csv").string())
              .examples.size() == 18);

  std::ofstream(box.path("bad.json")) << R"({"dd": 5})";
  REQUIRE(box.run("gen-data --config " + box.path("bad.json").string())
              .exit_code == 3);
  std::ofstream(box.path("worse.json")) << "{";
  REQUIRE(box.run("gen-data --config " + box.path("worse.json").string())
              .exit_code == 3);
}

TEST_CASE("config hash tracks semantic fields only") {
  Sandbox box;
  auto hash_of = [&](const std::string& extra) {
    const std::string out_train =
        box.path("h" + std::to_string(rand()) + ".csv").string();
    const auto result = box.run(
        "gen-data --d 4 --k 2 --train-size 10 --test-size 5 " + extra +
        " --out-train " + out_train + " --out-test " + out_train + "_t");
    REQUIRE(result.exit_code == 0);
    return grab_field(result.err, "config_hash");
  };
  const auto base = hash_of("");
  REQUIRE(base == hash_of(""));                       // stable
  REQUIRE(base != hash_of("--separation 2.5"));      // semantic change
  REQUIRE(base == hash_of("--threads 2"));           // operational knob
}

TEST_CASE("full pipeline, certification equivalences, and evaluation") {
  Pipeline pipe;
  pipe.build();
  auto& box = pipe.box;

  const std::string mc_log = box.path("mc.tsv").string();
  const std::string base_log = box.path("baseline.tsv").string();
  const std::string surr_log = box.path("surr.tsv").string();

  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --method mc --n 100 --sigma 0.5 --seed 7 --out " + mc_log)
              .exit_code == 0);
  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --method baseline --sigma 0.5 --seed 7 --out " + base_log)
              .exit_code == 0);

  // baseline is mc at N=100: identical rows apart from the method tag
  const auto mc_rows =
      certsmooth::evaluation::load_certification_log(mc_log).rows;
  const auto base_rows =
      certsmooth::evaluation::load_certification_log(base_log).rows;
  REQUIRE(mc_rows.size() == base_rows.size());
  for (std::size_t i = 0; i < mc_rows.size(); ++i) {
    REQUIRE(mc_rows[i].example_id == base_rows[i].example_id);
    REQUIRE(mc_rows[i].decision == base_rows[i].decision);
    REQUIRE(mc_rows[i].radius == base_rows[i].radius);
    REQUIRE(mc_rows[i].correct == base_rows[i].correct);
    REQUIRE(mc_rows[i].method == "mc");
    REQUIRE(base_rows[i].method == "baseline");
  }

  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --surrogate " + pipe.surrogate +
                  " --method surrogate --n 400 --sigma 0.5 --seed 7 --out " +
                  surr_log).exit_code == 0);
  const auto surr_rows =
      certsmooth::evaluation::load_certification_log(surr_log).rows;
  REQUIRE(surr_rows.size() == 30);

  // surrogate certification requires the surrogate weights
  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --method surrogate --out " + box.path("x.tsv").string())
              .exit_code == 1);
  // and rejects a non-simplex network in that role
  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --surrogate " + pipe.base + " --method surrogate --out " +
                  box.path("y.tsv").string()).exit_code == 1);

  const std::string metrics = box.path("metrics.tsv").string();
  const std::string report = box.path("report.tsv").string();
  REQUIRE(box.run("evaluate --log " + mc_log + " --compare " + surr_log +
                  " --out " + metrics + " --report-out " + report)
              .exit_code == 0);
  REQUIRE(slurp(metrics).find("acr\t") != std::string::npos);
  REQUIRE(slurp(report).find("underestimation_pct") != std::string::npos);
}

TEST_CASE("certification logs are byte-identical across reruns") {
  Pipeline pipe;
  pipe.build();
  auto& box = pipe.box;
  const std::string log_a = box.path("a.tsv").string();
  const std::string log_b = box.path("b.tsv").string();
  const std::string args = "certify --test " + pipe.test + " --model " +
                           pipe.base + " --method mc --n 300 --sigma 0.5 "
                           "--seed 11 --threads 1 --out ";
  REQUIRE(box.run(args + log_a).exit_code == 0);
  REQUIRE(box.run(args + log_b).exit_code == 0);
  REQUIRE(slurp(log_a) == slurp(log_b));

  // --log-times records real wall times and so breaks byte equality
  const std::string timed = box.path("timed.tsv").string();
  REQUIRE(box.run(args + timed + " --log-times").exit_code == 0);
  const auto rows = certsmooth::evaluation::load_certification_log(timed).rows;
  bool any_positive = false;
  for (const auto& row : rows) any_positive |= row.time_ms > 0.0;
  REQUIRE(any_positive);
}

TEST_CASE("CERTSMOOTH_SEED overrides the seed flag") {
  Pipeline pipe;
  pipe.build();
  auto& box = pipe.box;
  const std::string log_env = box.path("env.tsv").string();
  const std::string log_flag = box.path("flag.tsv").string();
  // env var set, flag pointing elsewhere: env must win
  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --method mc --n 200 --seed 999 --out " + log_env,
                  "CERTSMOOTH_SEED=31").exit_code == 0);
  REQUIRE(box.run("certify --test " + pipe.test + " --model " + pipe.base +
                  " --method mc --n 200 --seed 31 --out " + log_flag)
              .exit_code == 0);
  REQUIRE(slurp(log_env) == slurp(log_flag));
}

TEST_CASE("interrupted sampling resumes through the CLI") {
  Pipeline pipe;
  pipe.build();
  auto& box = pipe.box;
  const std::string fresh = slurp(pipe.counts);

  // truncate the counts file to simulate an interrupted run
  std::istringstream full(fresh);
  std::ofstream torn(pipe.counts, std::ios::trunc);
  std::string line;
  for (int i = 0; i < 40 && std::getline(full, line); ++i) torn << line << "\n";
  std::getline(full, line);
  torn << line.substr(0, 7);  // half-written record
  torn.close();

  // without --resume the file is refused; with it the run completes
  REQUIRE(box.run("sample --train " + pipe.train + " --model " + pipe.base +
                  " --out " + pipe.counts + " --sigma 0.5 --n 400 --seed 42")
              .exit_code == 1);
  REQUIRE(box.run("sample --train " + pipe.train + " --model " + pipe.base +
                  " --out " + pipe.counts +
                  " --sigma 0.5 --n 400 --seed 42 --resume").exit_code == 0);
  REQUIRE(slurp(pipe.counts) == fresh);

  // resume with a different seed is a config mismatch
  REQUIRE(box.run("sample --train " + pipe.train + " --model " + pipe.base +
                  " --out " + pipe.counts +
                  " --sigma 0.5 --n 400 --seed 43 --resume").exit_code == 3);
}

TEST_CASE("bench and variance commands emit their tables") {
  Pipeline pipe;
  pipe.build();
  auto& box = pipe.box;
  const std::string bench_out = box.path("bench.tsv").string();
  REQUIRE(box.run("bench --test " + pipe.test + " --model " + pipe.base +
                  " --surrogate " + pipe.surrogate +
                  " --n-sweep 50,200 --limit 5 --out " + bench_out)
              .exit_code == 0);
  const std::string bench_text = slurp(bench_out);
  REQUIRE(bench_text.find("method\tN\treps\tmedian_ms\tbelow_resolution") == 0);
  REQUIRE(bench_text.find("surrogate\t200") != std::string::npos);

  const std::string prefix = box.path("var").string();
  REQUIRE(box.run("variance --test " + pipe.test + " --model " + pipe.base +
                  " --sigma 0.5 --n 200 --resamples 5 --limit 5 --out-prefix " +
                  prefix).exit_code == 0);
  REQUIRE(fs::exists(prefix + "_per_class.tsv"));
  REQUIRE(slurp(prefix + "_summary.tsv").find("normalized_variance_pct") !=
          std::string::npos);
}
