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

// Acceptance suite. Runs nine checks end to end — statistical-kernel oracle
// equivalence, Clopper-Pearson coverage, gradient correctness, certification
// soundness, ACR trend reproduction, constant-time certification, the
// sampling-variance study, the estimation report, and byte-level pipeline
// determinism — and prints one pass/fail line per criterion. Exit code is
// the number of failures.
//
// Usage: acceptance [path-to-certsmooth-cli]
// The CLI path is needed only for the determinism criterion (9).

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "certsmooth/dataset.hpp"
#include "certsmooth/evaluation.hpp"
#include "certsmooth/model.hpp"
#include "certsmooth/numerics.hpp"
#include "certsmooth/smoothing.hpp"
#include "certsmooth/surrogate.hpp"
#include "oracles.hpp"

using namespace certsmooth;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<CriterionResult> g_results;

void record(int id, const std::string& name, bool pass,
            const std::string& detail, const Clock::time_point& start) {
  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  g_results.push_back({id, name, pass, detail, secs});
  std::cerr << "  ... criterion " << id << (pass ? " ok" : " FAILED") << " ("
            << detail << ", " << secs << "s)\n";
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Statistical-kernel oracle equivalence
// ---------------------------------------------------------------------------

void criterion_1() {
  const auto start = Clock::now();
  double worst_cp = 0.0;
  for (const std::uint64_t n : {10ULL, 100ULL, 1000ULL, 100000ULL}) {
    const std::uint64_t ks[] = {0, 1, n / 2, n - 1, n};
    for (const std::uint64_t k : ks) {
      for (const double alpha : {0.05, 0.01, 0.001}) {
        const double got =
            numerics::clopper_pearson_lower(k, n, numerics::Probability(alpha));
        const double want = oracles::clopper_pearson_lower(k, n, alpha);
        worst_cp = std::max(worst_cp, std::fabs(got - want));
      }
    }
  }
  double worst_rt = 0.0;
  for (double x = -6.0; x <= 6.0; x += 0.001) {
    const double back = numerics::gaussian_quantile(numerics::gaussian_cdf(x));
    worst_rt = std::max(worst_rt, std::fabs(back - x));
  }
  const bool pass = worst_cp <= 1e-9 && worst_rt <= 1e-8;
  record(1, "statistical-kernel oracle equivalence", pass,
         "max CP deviation " + fmt(worst_cp) + " (tol 1e-9), max round-trip " +
             fmt(worst_rt) + " (tol 1e-8)",
         start);
}

// ---------------------------------------------------------------------------
// 2. Clopper-Pearson coverage
// ---------------------------------------------------------------------------

void criterion_2() {
  const auto start = Clock::now();
  std::mt19937_64 gen(20260809);
  bool pass = true;
  std::string detail;
  double worst_margin = 1.0;
  for (const std::uint64_t n : {100ULL, 10000ULL}) {
    for (const double p : {0.6, 0.9, 0.99}) {
      for (const double alpha : {0.05, 0.001}) {
        std::binomial_distribution<std::uint64_t> binom(n, p);
        std::unordered_map<std::uint64_t, double> memo;
        std::size_t covered = 0;
        const std::size_t draws = 10000;
        for (std::size_t i = 0; i < draws; ++i) {
          const std::uint64_t k = binom(gen);
          auto it = memo.find(k);
          if (it == memo.end()) {
            it = memo.emplace(k, numerics::clopper_pearson_lower(
                                     k, n, numerics::Probability(alpha)))
                     .first;
          }
          if (it->second <= p) ++covered;
        }
        const double coverage =
            static_cast<double>(covered) / static_cast<double>(draws);
        const double floor = 1.0 - alpha - 0.01;
        worst_margin = std::min(worst_margin, coverage - floor);
        if (coverage < floor) {
          pass = false;
          detail += " n=" + std::to_string(n) + ",p=" + fmt(p) +
                    ",alpha=" + fmt(alpha) + " covers " + fmt(coverage);
        }
      }
    }
  }
  record(2, "Clopper-Pearson coverage over 10^4 draws", pass,
         pass ? "worst margin above floor " + fmt(worst_margin) : detail,
         start);
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness
// ---------------------------------------------------------------------------

void criterion_3() {
  const auto start = Clock::now();
  std::mt19937_64 gen(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (const auto loss : {model::Loss::kCrossEntropy, model::Loss::kJs}) {
    for (int trial = 0; trial < 6; ++trial) {
      auto net = model::init_network({6, 9, 4}, model::Head::kSimplexPredictor,
                                     500 + trial);
      std::vector<double> x(6);
      for (double& v : x) v = normal(gen);
      std::vector<double> target(4, 0.0);
      if (trial % 2 == 0) {
        target[static_cast<std::size_t>(trial) % 4] = 1.0;
      } else {
        target = {0.1, 0.4, 0.3, 0.2};
      }
      const auto analytic = model::analytic_gradient(net, x, target, loss);
      const auto fd = oracles::finite_difference_gradient(net, x, target, loss);
      for (std::size_t l = 0; l < analytic.layers.size(); ++l) {
        auto scan = [&](const std::vector<double>& a,
                        const std::vector<double>& b) {
          for (std::size_t i = 0; i < a.size(); ++i) {
            const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-6});
            worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
          }
        };
        scan(analytic.layers[l].w, fd.layers[l].w);
        scan(analytic.layers[l].b, fd.layers[l].b);
      }
    }
  }
  record(3, "analytic gradients match finite differences", worst < 1e-4,
         "max relative error " + fmt(worst) + " (tol 1e-4)", start);
}

// ---------------------------------------------------------------------------
// Shared pipeline on the default synthetic task
// ---------------------------------------------------------------------------

struct SigmaRun {
  double sigma = 0.0;
  model::NetworkParams base;
  model::NetworkParams surrogate;
  evaluation::CertificationLog mc;
  evaluation::CertificationLog baseline;
  evaluation::CertificationLog surr;
};

struct PipelineArtifacts {
  data::Dataset train;
  data::Dataset test;
  std::vector<SigmaRun> runs;
  double seconds = 0.0;
};

PipelineArtifacts run_default_pipeline() {
  const auto start = Clock::now();
  PipelineArtifacts art;

  data::GenConfig gen;
  gen.dim = 16;
  gen.num_classes = 4;
  gen.train_size = 2000;
  gen.test_size = 500;
  gen.separation = 6.0;
  gen.data_seed = 7;
  std::tie(art.train, art.test) = data::generate(gen);

  model::TrainingSet base_set;
  for (const auto& ex : art.train.examples) {
    base_set.inputs.push_back(ex.features);
    base_set.targets.push_back(data::one_hot(ex.label, gen.num_classes));
  }

  for (const double sigma : {0.25, 0.5}) {
    std::cerr << "  ... pipeline sigma=" << sigma << "\n";
    SigmaRun run;
    run.sigma = sigma;

    model::TrainConfig tc;  // paper-mirroring defaults: 200 epochs, batch 128
    tc.seed = 42;
    auto base = model::init_network({16, 64, 64, 4},
                                    model::Head::kArgmaxClassifier, tc.seed);
    run.base = model::train(std::move(base), base_set,
                            model::Loss::kCrossEntropy, tc, sigma);

    const auto counts = surrogate::build_counts_dataset(
        run.base, art.train.examples, sigma, 10000, 42);
    run.surrogate =
        surrogate::train_surrogate(art.train.examples, counts, {64, 64}, tc);

    smoothing::SmoothingParams params;
    params.sigma = sigma;
    params.n = 10000;
    params.n0 = 100;
    params.alpha = 0.001;
    params.seed = 42;
    run.mc = evaluation::run_certification(run.base, nullptr,
                                           art.test.examples, params, "mc");
    run.surr = evaluation::run_certification(
        run.base, &run.surrogate, art.test.examples, params, "surrogate");
    smoothing::SmoothingParams base_params = params;
    base_params.n = 100;
    run.baseline = evaluation::run_certification(
        run.base, nullptr, art.test.examples, base_params, "baseline");
    art.runs.push_back(std::move(run));
  }
  art.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return art;
}

// ---------------------------------------------------------------------------
// 4. Algorithm soundness over a 500-input certification run
// ---------------------------------------------------------------------------

void criterion_4(const PipelineArtifacts& art) {
  const auto start = Clock::now();
  const SigmaRun& run = art.runs.back();  // sigma = 0.5
  smoothing::SmoothingParams params;
  params.sigma = run.sigma;
  params.n = 10000;
  params.n0 = 100;
  params.alpha = 0.001;
  params.seed = 42;

  std::size_t disagreements = 0, weak_bounds = 0, certified = 0;
  for (const auto& ex : art.test.examples) {
    const auto outcome = surrogate::accelerated_certify(
        run.base, run.surrogate, ex.features, params, ex.id);
    if (outcome.decision == smoothing::kAbstain) continue;
    ++certified;
    if (outcome.p_a_lower <= 0.5) ++weak_bounds;
    const int predicted =
        smoothing::predict(run.base, ex.features, params, ex.id);
    const auto probs = model::forward(run.surrogate, ex.features);
    const auto top = surrogate::counts_from_simplex(probs, params.n);
    int top_class = 0;
    for (int c = 1; c < 4; ++c) {
      if (top[static_cast<std::size_t>(c)] > top[static_cast<std::size_t>(top_class)]) {
        top_class = c;
      }
    }
    if (predicted != outcome.decision || top_class != outcome.decision) {
      ++disagreements;
    }
  }
  const bool pass = disagreements == 0 && weak_bounds == 0 && certified > 0;
  record(4, "certification soundness on 500 inputs", pass,
         std::to_string(certified) + " certified, " +
             std::to_string(disagreements) + " gate violations, " +
             std::to_string(weak_bounds) + " bounds <= 1/2",
         start);
}

// ---------------------------------------------------------------------------
// 5. ACR trend reproduction
// ---------------------------------------------------------------------------

void criterion_5(const PipelineArtifacts& art) {
  const auto start = Clock::now();
  bool pass = true;
  std::string detail;
  for (const SigmaRun& run : art.runs) {
    const double acr_mc = evaluation::average_certified_radius(run.mc);
    const double acr_surr = evaluation::average_certified_radius(run.surr);
    const double acr_base = evaluation::average_certified_radius(run.baseline);
    const double ratio = acr_mc > 0.0 ? acr_surr / acr_mc : 0.0;
    if (!(acr_mc > 0.0 && ratio >= 0.80 && acr_surr > acr_base)) pass = false;
    detail += "sigma=" + fmt(run.sigma) + ": mc=" + fmt(acr_mc) +
              " surr=" + fmt(acr_surr) + " (ratio " + fmt(ratio, 3) +
              ") baseline=" + fmt(acr_base) + "; ";
  }
  detail += "pipeline " + fmt(art.seconds, 3) + "s (budget 600s)";
  if (art.seconds >= 600.0) pass = false;
  record(5, "ACR trend: surrogate >= 0.80x MC and beats baseline", pass,
         detail, start);
}

// ---------------------------------------------------------------------------
// 6. Constant-time certification vs linear Monte Carlo
// ---------------------------------------------------------------------------

void criterion_6(PipelineArtifacts& art) {
  const auto start = Clock::now();
  SigmaRun& run = art.runs.back();
  smoothing::SmoothingParams params;
  params.sigma = run.sigma;
  params.n0 = 100;
  params.alpha = 0.001;
  params.seed = 42;

  // single-forward-pass property at every sweep point
  run.surrogate.forward_counter =
      std::make_shared<std::atomic<std::uint64_t>>(0);
  bool single_forward = true;
  for (const std::uint64_t n : {100ULL, 1000ULL, 10000ULL, 100000ULL}) {
    smoothing::SmoothingParams p = params;
    p.n = n;
    for (int i = 0; i < 3; ++i) {
      const auto& ex = art.test.examples[static_cast<std::size_t>(i)];
      const std::uint64_t before = run.surrogate.forward_counter->load();
      surrogate::accelerated_certify(run.base, run.surrogate, ex.features, p,
                                     ex.id);
      if (run.surrogate.forward_counter->load() - before != 1) {
        single_forward = false;
      }
    }
  }
  run.surrogate.forward_counter.reset();

  const std::vector<std::uint64_t> sweep{100, 1000, 10000, 100000};
  std::vector<data::LabeledExample> subset(
      art.test.examples.begin(), art.test.examples.begin() + 20);
  const auto table =
      evaluation::bench(run.base, run.surrogate, subset, params, sweep, 20);

  auto cell = [&](const std::string& method, std::uint64_t n) {
    for (const auto& row : table.rows) {
      if (row.method == method && row.n == n) return row.median_ms;
    }
    return -1.0;
  };
  double surr_min = 1e300, surr_max = 0.0;
  for (const std::uint64_t n : sweep) {
    surr_min = std::min(surr_min, cell("surrogate", n));
    surr_max = std::max(surr_max, cell("surrogate", n));
  }
  const double surr_ratio = surr_max / surr_min;
  const double mc_ratio = cell("mc", 100000) / cell("mc", 1000);
  const bool pass = single_forward && surr_ratio <= 2.0 && mc_ratio >= 50.0;
  record(6, "O(1) surrogate certification vs O(N) sampling", pass,
         "surrogate spread " + fmt(surr_ratio, 3) + "x (tol 2x), MC 1e5/1e3 " +
             fmt(mc_ratio, 3) + "x (floor 50x), single-forward " +
             (single_forward ? "yes" : "NO"),
         start);
}

// ---------------------------------------------------------------------------
// 7. Sampling-variance study against the binomial estimate
// ---------------------------------------------------------------------------

void criterion_7() {
  const auto start = Clock::now();
  // moderately separated blobs so many (input, class) cells land mid-range
  data::GenConfig gen;
  gen.dim = 8;
  gen.num_classes = 4;
  gen.train_size = 400;
  gen.test_size = 50;
  gen.separation = 2.5;
  gen.data_seed = 19;
  const auto [train, test] = data::generate(gen);

  model::TrainingSet set;
  for (const auto& ex : train.examples) {
    set.inputs.push_back(ex.features);
    set.targets.push_back(data::one_hot(ex.label, gen.num_classes));
  }
  model::TrainConfig tc;
  tc.epochs = 40;
  tc.seed = 5;
  auto base =
      model::init_network({8, 32, 4}, model::Head::kArgmaxClassifier, tc.seed);
  base = model::train(std::move(base), set, model::Loss::kCrossEntropy, tc, 0.5);

  const std::uint64_t n = 10000;
  const auto study =
      evaluation::variance_study(base, test.examples, 0.5, n, 50, 33);

  std::size_t cells = 0, within = 0;
  for (std::size_t e = 0; e < study.cell_mean.size(); ++e) {
    for (std::size_t c = 0; c < gen.num_classes; ++c) {
      const double p_hat = study.cell_mean[e][c] / static_cast<double>(n);
      if (p_hat < 0.05 || p_hat > 0.95) continue;
      ++cells;
      const double binom = static_cast<double>(n) * p_hat * (1.0 - p_hat);
      if (study.cell_variance[e][c] <= 3.0 * binom) ++within;
    }
  }
  const double fraction =
      cells > 0 ? static_cast<double>(within) / static_cast<double>(cells) : 0.0;
  const bool pass = cells > 0 && fraction >= 0.95;
  record(7, "count variance within 3x binomial on 50x50 resampling", pass,
         std::to_string(within) + "/" + std::to_string(cells) +
             " mid-range cells within bound (" + fmt(100.0 * fraction, 4) +
             "%, floor 95%); normalized variance " +
             fmt(study.normalized_variance_pct, 3) + "% of N",
         start);
}

// ---------------------------------------------------------------------------
// 8. Estimation report
// ---------------------------------------------------------------------------

void criterion_8(const PipelineArtifacts& art) {
  const auto start = Clock::now();
  bool pass = true;
  std::string detail;

  // the serialized report carries all ten specified columns (plus the tie
  // bucket and pair count)
  const fs::path tmp =
      fs::temp_directory_path() / "certsmooth_acceptance_report.tsv";
  const auto probe =
      evaluation::estimation_report(art.runs.back().mc, art.runs.back().surr);
  evaluation::save_estimation_report(probe, tmp.string());
  std::ifstream in(tmp);
  std::string header;
  std::getline(in, header);
  in.close();
  fs::remove(tmp);
  std::size_t columns = 1;
  for (const char c : header) columns += c == '\t';
  if (columns < 10) {
    pass = false;
    detail += "only " + std::to_string(columns) + " columns; ";
  }

  for (const SigmaRun& run : art.runs) {
    const auto report = evaluation::estimation_report(run.mc, run.surr, 0.25);
    const double total = report.underestimation_pct + report.overestimation_pct +
                         report.exact_equal_pct;
    if (report.eligible_pairs == 0 || std::fabs(total - 100.0) > 1e-9) {
      pass = false;
      detail += "sigma=" + fmt(run.sigma) + " splits sum to " + fmt(total) + "; ";
    }

    // median relative radius error over eligible pairs
    std::unordered_map<std::int64_t, double> mc_radius;
    for (const auto& row : run.mc.rows) {
      if (row.decision != smoothing::kAbstain) mc_radius[row.example_id] = row.radius;
    }
    std::vector<double> rel_errors;
    for (const auto& row : run.surr.rows) {
      if (row.decision == smoothing::kAbstain) continue;
      const auto it = mc_radius.find(row.example_id);
      if (it == mc_radius.end()) continue;
      if (row.radius < 0.25 || it->second < 0.25) continue;
      rel_errors.push_back(std::fabs(row.radius - it->second) / it->second);
    }
    std::sort(rel_errors.begin(), rel_errors.end());
    const double median =
        rel_errors.empty() ? 1.0 : rel_errors[rel_errors.size() / 2];
    if (median > 0.25) pass = false;
    detail += "sigma=" + fmt(run.sigma) + ": median rel err " +
              fmt(100.0 * median, 3) + "% over " +
              std::to_string(rel_errors.size()) + " pairs (under " +
              fmt(report.underestimation_pct, 3) + "%, over " +
              fmt(report.overestimation_pct, 3) + "%); ";
  }
  record(8, "estimation report: columns, partition, median error <= 25%", pass,
         detail, start);
}

// ---------------------------------------------------------------------------
// 9. Byte-level determinism of the pipeline through the CLI
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_9(const std::string& cli) {
  const auto start = Clock::now();
  if (cli.empty() || !fs::exists(cli)) {
    record(9, "pipeline determinism (byte-identical artifacts)", false,
           "CLI binary not found; pass its path as argv[1]", start);
    return;
  }
  auto run_pipeline = [&](const fs::path& dir) -> bool {
    fs::create_directories(dir);
    auto sh = [&](const std::string& args) {
      const std::string cmd =
          cli + " " + args + " >> " + (dir / "log.txt").string() + " 2>&1";
      const int status = std::system(cmd.c_str());
      return WIFEXITED(status) && WEXITSTATUS(status) == 0;
    };
    const std::string train = (dir / "train.csv").string();
    const std::string test = (dir / "test.csv").string();
    const std::string base = (dir / "base.w").string();
    const std::string counts = (dir / "counts.csds").string();
    const std::string surr = (dir / "surr.w").string();
    return sh("gen-data --d 8 --k 3 --train-size 150 --test-size 40 "
              "--separation 5 --data-seed 3 --out-train " + train +
              " --out-test " + test) &&
           sh("train-base --train " + train + " --out " + base +
              " --sigma 0.5 --epochs 30 --hidden 32 --seed 42 --threads 1") &&
           sh("sample --train " + train + " --model " + base + " --out " +
              counts + " --sigma 0.5 --n 500 --seed 42 --threads 1") &&
           sh("train-surrogate --train " + train + " --counts " + counts +
              " --out " + surr + " --epochs 30 --hidden 32 --seed 42") &&
           sh("certify --test " + test + " --model " + base +
              " --method mc --n 500 --sigma 0.5 --seed 42 --threads 1 --out " +
              (dir / "mc.tsv").string()) &&
           sh("certify --test " + test + " --model " + base + " --surrogate " +
              surr + " --method surrogate --n 500 --sigma 0.5 --seed 42 "
              "--threads 1 --out " + (dir / "surr.tsv").string());
  };

  const fs::path root =
      fs::temp_directory_path() / "certsmooth_acceptance_determinism";
  std::error_code ec;
  fs::remove_all(root, ec);
  const fs::path dir_a = root / "a";
  const fs::path dir_b = root / "b";
  bool pass = run_pipeline(dir_a) && run_pipeline(dir_b);
  std::string detail;
  if (!pass) {
    detail = "pipeline command failed (see " + (root / "*/log.txt").string() + ")";
  } else {
    for (const char* name : {"counts.csds", "mc.tsv", "surr.tsv", "base.w",
                             "surr.w", "train.csv"}) {
      const bool same = slurp(dir_a / name) == slurp(dir_b / name);
      if (!same) pass = false;
      detail += std::string(name) + (same ? " identical; " : " DIFFERS; ");
    }
  }
  if (pass) fs::remove_all(root, ec);
  record(9, "pipeline determinism (byte-identical artifacts)", pass, detail,
         start);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::cerr << "acceptance: kernels...\n";
  criterion_1();
  criterion_2();
  criterion_3();
  std::cerr << "acceptance: default pipeline (2 sigmas)...\n";
  auto artifacts = run_default_pipeline();
  criterion_4(artifacts);
  criterion_5(artifacts);
  criterion_6(artifacts);
  criterion_7();
  criterion_8(artifacts);
  criterion_9(cli);

  std::sort(g_results.begin(), g_results.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  int failures = 0;
  std::cout << "\n";
  for (const auto& r : g_results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << r.id << ": "
              << r.name << " - " << r.detail << "\n";
    if (!r.pass) ++failures;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED"
                              : std::to_string(failures) + " CRITERIA FAILED")
            << "\n";
  return failures;
}
