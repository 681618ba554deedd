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

// Evaluation harness: certification logs, certified accuracy and ACR,
// surrogate-vs-sampling estimation error reports, the sampling-variance
// study, and the certification timing benchmark.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "certsmooth/dataset.hpp"
#include "certsmooth/errors.hpp"
#include "certsmooth/smoothing.hpp"
#include "certsmooth/surrogate.hpp"

namespace certsmooth::evaluation {

using smoothing::CertOutcome;
using smoothing::kAbstain;
using smoothing::SmoothingParams;

struct LogRow {
  std::int64_t example_id = 0;
  int label = 0;
  int decision = kAbstain;
  double radius = 0.0;
  bool correct = false;
  double time_ms = 0.0;
  std::string method;
};

struct CertificationLog {
  std::vector<LogRow> rows;
};

/// Certifies every example with the requested method and collects one row
/// per example. method "mc" and "baseline" run Monte Carlo certification
/// (the caller picks n); "surrogate" runs accelerated certification and
/// requires h.
inline CertificationLog run_certification(
    const model::NetworkParams& f, const model::NetworkParams* h,
    const std::vector<data::LabeledExample>& examples,
    const SmoothingParams& params, const std::string& method,
    unsigned threads = 1) {
  if (method != "mc" && method != "baseline" && method != "surrogate") {
    throw std::invalid_argument("run_certification: unknown method '" + method + "'");
  }
  if (method == "surrogate" && h == nullptr) {
    throw std::invalid_argument("run_certification: surrogate method needs a surrogate network");
  }
  CertificationLog log;
  log.rows.reserve(examples.size());
  for (const data::LabeledExample& ex : examples) {
    const CertOutcome outcome =
        method == "surrogate"
            ? surrogate::accelerated_certify(f, *h, ex.features, params, ex.id,
                                             threads)
            : smoothing::certify_mc(f, ex.features, params, ex.id, threads);
    LogRow row;
    row.example_id = ex.id;
    row.label = ex.label;
    row.decision = outcome.decision;
    row.radius = outcome.radius;
    row.correct = !outcome.abstained() && outcome.decision == ex.label;
    row.time_ms = outcome.elapsed.count();
    row.method = method;
    log.rows.push_back(std::move(row));
  }
  return log;
}

/// Fraction of the log certified correctly (no abstention, right class) at
/// radius at least r. Nonincreasing in r; an empty log scores 0.
inline double certified_accuracy(const CertificationLog& log, double r) {
  if (!(r >= 0.0)) {
    throw std::invalid_argument("certified_accuracy: r must be >= 0");
  }
  if (log.rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (const LogRow& row : log.rows) {
    if (row.correct && row.radius >= r) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(log.rows.size());
}

/// Mean certified radius over all evaluated examples, counting abstentions
/// and misclassifications as radius 0.
inline double average_certified_radius(const CertificationLog& log) {
  if (log.rows.empty()) return 0.0;
  double acc = 0.0;
  for (const LogRow& row : log.rows) {
    if (row.correct) acc += row.radius;
  }
  return acc / static_cast<double>(log.rows.size());
}

// ---------------------------------------------------------------------------
// Estimation error report (surrogate radius vs sampling radius)
// ---------------------------------------------------------------------------

struct EstimationReport {
  double percentage_error_under = 0.0;
  double ground_acr_under = 0.0;
  double underestimation_pct = 0.0;
  double mean_error_under = 0.0;
  double error_variance_under = 0.0;
  double percentage_error_over = 0.0;
  double ground_acr_over = 0.0;
  double overestimation_pct = 0.0;
  double mean_error_over = 0.0;
  double error_variance_over = 0.0;
  // Ties are reported but excluded from both splits.
  double exact_equal_pct = 0.0;
  std::size_t eligible_pairs = 0;
};

namespace detail {

struct SplitStats {
  double percentage_error = 0.0;
  double ground_acr = 0.0;
  double pct = 0.0;
  double mean_error = 0.0;
  double error_variance = 0.0;
};

inline SplitStats split_stats(const std::vector<std::pair<double, double>>& pairs,
                              std::size_t eligible) {
  // pairs hold (r_sampling, r_predicted)
  SplitStats s;
  if (pairs.empty() || eligible == 0) return s;
  double pe = 0.0, acr = 0.0, err = 0.0, err2 = 0.0;
  for (const auto& [samp, pred] : pairs) {
    const double abs_err = std::fabs(pred - samp);
    pe += 100.0 * abs_err / samp;
    acr += samp;
    err += abs_err;
    err2 += abs_err * abs_err;
  }
  const double m = static_cast<double>(pairs.size());
  s.percentage_error = pe / m;
  s.ground_acr = acr / m;
  s.pct = 100.0 * m / static_cast<double>(eligible);
  s.mean_error = err / m;
  s.error_variance = err2 / m - (err / m) * (err / m);
  return s;
}

}  // namespace detail

/// Pairs the two logs by example id, keeps pairs where both methods certified
/// with radius >= r_min, and reports the underestimation and overestimation
/// splits: mean percentage error, ground-truth (sampling) ACR, split share of
/// the eligible pairs, mean absolute error, and error variance.
inline EstimationReport estimation_report(const CertificationLog& mc_log,
                                          const CertificationLog& surrogate_log,
                                          double r_min = 0.25) {
  std::unordered_map<std::int64_t, const LogRow*> mc_by_id;
  for (const LogRow& row : mc_log.rows) mc_by_id[row.example_id] = &row;
  if (mc_by_id.size() != mc_log.rows.size() ||
      surrogate_log.rows.size() != mc_log.rows.size()) {
    throw std::invalid_argument("estimation_report: logs must cover identical example sets");
  }

  std::vector<std::pair<double, double>> under, over;
  std::size_t ties = 0, eligible = 0;
  for (const LogRow& pred_row : surrogate_log.rows) {
    const auto it = mc_by_id.find(pred_row.example_id);
    if (it == mc_by_id.end()) {
      throw std::invalid_argument("estimation_report: example " +
                                  std::to_string(pred_row.example_id) +
                                  " missing from sampling log");
    }
    const LogRow& mc_row = *it->second;
    if (mc_row.decision == kAbstain || pred_row.decision == kAbstain) continue;
    if (mc_row.radius < r_min || pred_row.radius < r_min) continue;
    ++eligible;
    if (pred_row.radius < mc_row.radius) {
      under.emplace_back(mc_row.radius, pred_row.radius);
    } else if (pred_row.radius > mc_row.radius) {
      over.emplace_back(mc_row.radius, pred_row.radius);
    } else {
      ++ties;
    }
  }

  EstimationReport report;
  report.eligible_pairs = eligible;
  const auto u = detail::split_stats(under, eligible);
  const auto o = detail::split_stats(over, eligible);
  report.percentage_error_under = u.percentage_error;
  report.ground_acr_under = u.ground_acr;
  report.underestimation_pct = u.pct;
  report.mean_error_under = u.mean_error;
  report.error_variance_under = u.error_variance;
  report.percentage_error_over = o.percentage_error;
  report.ground_acr_over = o.ground_acr;
  report.overestimation_pct = o.pct;
  report.mean_error_over = o.mean_error;
  report.error_variance_over = o.error_variance;
  report.exact_equal_pct =
      eligible == 0 ? 0.0 : 100.0 * static_cast<double>(ties) / static_cast<double>(eligible);
  return report;
}

// ---------------------------------------------------------------------------
// Sampling-variance study
// ---------------------------------------------------------------------------

struct VarianceStudy {
  std::uint64_t n = 0;
  std::uint64_t resamples = 0;
  std::vector<std::int64_t> example_ids;
  std::vector<std::vector<double>> cell_mean;      // [example][class] mean count
  std::vector<std::vector<double>> cell_variance;  // [example][class]
  std::vector<double> class_mean_variance;         // averaged over examples
  double normalized_variance_pct = 0.0;            // mean variance as % of n
};

/// Resamples each example's counts with distinct sub-seeds and reports the
/// per-class count variance, averaged over examples, plus the variance as a
/// percentage of the sample count n.
inline VarianceStudy variance_study(
    const model::NetworkParams& f,
    const std::vector<data::LabeledExample>& examples, double sigma,
    std::uint64_t n, std::uint64_t resamples, std::uint64_t seed,
    unsigned threads = 1) {
  if (resamples < 2) {
    throw std::invalid_argument("variance_study: resamples must be >= 2");
  }
  if (examples.empty()) {
    throw std::invalid_argument("variance_study: no examples");
  }
  const std::size_t k = f.num_classes();
  VarianceStudy study;
  study.n = n;
  study.resamples = resamples;
  study.class_mean_variance.assign(k, 0.0);
  for (const data::LabeledExample& ex : examples) {
    std::vector<double> sum(k, 0.0), sum2(k, 0.0);
    for (std::uint64_t r = 0; r < resamples; ++r) {
      const auto counts = smoothing::sample_counts(
          f, ex.features, sigma, n,
          rng::derive(rng::derive(seed, static_cast<std::uint64_t>(ex.id),
                                  rng::kVarianceStream),
                      r),
          threads);
      for (std::size_t c = 0; c < k; ++c) {
        const double v = static_cast<double>(counts[c]);
        sum[c] += v;
        sum2[c] += v * v;
      }
    }
    std::vector<double> mean(k), var(k);
    const double m = static_cast<double>(resamples);
    for (std::size_t c = 0; c < k; ++c) {
      mean[c] = sum[c] / m;
      var[c] = std::max(0.0, sum2[c] / m - mean[c] * mean[c]);
      study.class_mean_variance[c] += var[c];
    }
    study.example_ids.push_back(ex.id);
    study.cell_mean.push_back(std::move(mean));
    study.cell_variance.push_back(std::move(var));
  }
  double total = 0.0;
  for (double& v : study.class_mean_variance) {
    v /= static_cast<double>(examples.size());
    total += v;
  }
  study.normalized_variance_pct =
      100.0 * (total / static_cast<double>(k)) / static_cast<double>(n);
  return study;
}

// ---------------------------------------------------------------------------
// Certification timing benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
  std::string method;
  std::uint64_t n = 0;
  std::size_t reps = 0;
  double median_ms = 0.0;
  bool below_resolution = false;
};

struct BenchTable {
  double timer_granularity_ms = 0.0;
  std::vector<BenchRow> rows;
};

namespace detail {

inline double timer_granularity_ms() {
  using clock = std::chrono::steady_clock;
  double best = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 64; ++trial) {
    const auto t0 = clock::now();
    auto t1 = clock::now();
    while (t1 == t0) t1 = clock::now();
    best = std::min(
        best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  return m % 2 == 1 ? values[m / 2]
                    : 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

}  // namespace detail

/// Median certification wall time per (method, N) cell over at least 20
/// certifications each, warmup excluded, forced single-threaded. Cells whose
/// median lands near the clock granularity carry a below-resolution flag.
inline BenchTable bench(const model::NetworkParams& f,
                        const model::NetworkParams& h,
                        const std::vector<data::LabeledExample>& examples,
                        const SmoothingParams& params,
                        const std::vector<std::uint64_t>& n_sweep,
                        std::size_t reps = 20) {
  if (examples.empty()) throw std::invalid_argument("bench: no examples");
  if (!std::is_sorted(n_sweep.begin(), n_sweep.end()) || n_sweep.empty()) {
    throw std::invalid_argument("bench: n_sweep must be nonempty and ascending");
  }
  reps = std::max<std::size_t>(reps, 20);

  BenchTable table;
  table.timer_granularity_ms = detail::timer_granularity_ms();
  const double resolution_floor = 50.0 * table.timer_granularity_ms;
  using clock = std::chrono::steady_clock;

  for (const std::string method : {"mc", "surrogate"}) {
    for (const std::uint64_t n : n_sweep) {
      SmoothingParams cell = params;
      cell.n = n;
      cell.n0 = std::min(cell.n0, n);  // small sweep cells cap the selection pass
      auto certify_once = [&](std::size_t rep) {
        const data::LabeledExample& ex = examples[rep % examples.size()];
        SmoothingParams p = cell;
        p.seed = rng::derive(params.seed, rng::kBenchStream, rep);
        if (method == "mc") {
          smoothing::certify_mc(f, ex.features, p, ex.id, /*threads=*/1);
        } else {
          surrogate::accelerated_certify(f, h, ex.features, p, ex.id,
                                         /*threads=*/1);
        }
      };
      for (std::size_t warm = 0; warm < 2; ++warm) certify_once(warm);
      std::vector<double> times;
      times.reserve(reps);
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto t0 = clock::now();
        certify_once(rep);
        const auto t1 = clock::now();
        times.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      BenchRow row;
      row.method = method;
      row.n = n;
      row.reps = reps;
      row.median_ms = detail::median(std::move(times));
      row.below_resolution = row.median_ms < resolution_floor;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Tab-separated file formats
// ---------------------------------------------------------------------------

inline constexpr const char* kLogHeader =
    "idx\tlabel\tpredict\tradius\tcorrect\ttime_ms\tmethod";

/// Writes a certification log. Row times are wall-clock measurements and
/// vary run to run, so they are written as 0.000 unless include_times is
/// set; this keeps default artifacts byte-identical across reruns.
inline void save_certification_log(const CertificationLog& log,
                                   const std::string& path,
                                   bool include_times = false) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_certification_log: cannot open " + path);
  out << kLogHeader << "\n";
  char time_buf[32];
  for (const LogRow& row : log.rows) {
    std::snprintf(time_buf, sizeof(time_buf), "%.3f",
                  include_times ? row.time_ms : 0.0);
    out << row.example_id << '\t' << row.label << '\t' << row.decision << '\t'
        << data::detail::format_double(row.radius) << '\t'
        << (row.correct ? 1 : 0) << '\t' << time_buf << '\t' << row.method
        << "\n";
  }
  if (!out) throw std::runtime_error("save_certification_log: write failed for " + path);
}

inline CertificationLog load_certification_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw missing_artifact_error("load_certification_log: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) {
    throw format_error(path + ": bad certification-log header");
  }
  CertificationLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string context = path + ":" + std::to_string(line_no);
    const auto fields = data::detail::split(line, '\t');
    if (fields.size() != 7) {
      throw format_error(context + ": expected 7 fields");
    }
    LogRow row;
    row.example_id = data::detail::parse_int(fields[0], context + " idx");
    row.label = static_cast<int>(data::detail::parse_int(fields[1], context + " label"));
    row.decision = static_cast<int>(data::detail::parse_int(fields[2], context + " predict"));
    row.radius = data::detail::parse_double(fields[3], context + " radius");
    const std::int64_t correct = data::detail::parse_int(fields[4], context + " correct");
    row.time_ms = data::detail::parse_double(fields[5], context + " time_ms");
    row.method = std::string(fields[6]);
    if (correct != 0 && correct != 1) {
      throw format_error(context + ": correct must be 0 or 1");
    }
    row.correct = correct == 1;
    if (row.correct != (row.decision != kAbstain && row.decision == row.label)) {
      throw format_error(context + ": correct flag inconsistent with decision");
    }
    if (row.radius < 0.0 || (row.decision == kAbstain && row.radius != 0.0)) {
      throw format_error(context + ": invalid radius");
    }
    log.rows.push_back(std::move(row));
  }
  return log;
}

inline constexpr const char* kEstimationHeader =
    "percentage_error_under\tground_acr_under\tunderestimation_pct\t"
    "mean_error_under\terror_variance_under\tpercentage_error_over\t"
    "ground_acr_over\toverestimation_pct\tmean_error_over\t"
    "error_variance_over\texact_equal_pct\teligible_pairs";

inline void save_estimation_report(const EstimationReport& r,
                                   const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_estimation_report: cannot open " + path);
  const auto fmt = data::detail::format_double;
  out << kEstimationHeader << "\n"
      << fmt(r.percentage_error_under) << '\t' << fmt(r.ground_acr_under)
      << '\t' << fmt(r.underestimation_pct) << '\t' << fmt(r.mean_error_under)
      << '\t' << fmt(r.error_variance_under) << '\t'
      << fmt(r.percentage_error_over) << '\t' << fmt(r.ground_acr_over) << '\t'
      << fmt(r.overestimation_pct) << '\t' << fmt(r.mean_error_over) << '\t'
      << fmt(r.error_variance_over) << '\t' << fmt(r.exact_equal_pct) << '\t'
      << r.eligible_pairs << "\n";
  if (!out) throw std::runtime_error("save_estimation_report: write failed for " + path);
}

inline void save_bench_table(const BenchTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_bench_table: cannot open " + path);
  out << "method\tN\treps\tmedian_ms\tbelow_resolution\n";
  for (const BenchRow& row : table.rows) {
    out << row.method << '\t' << row.n << '\t' << row.reps << '\t'
        << data::detail::format_double(row.median_ms) << '\t'
        << (row.below_resolution ? 1 : 0) << "\n";
  }
  if (!out) throw std::runtime_error("save_bench_table: write failed for " + path);
}

inline void save_variance_study(const VarianceStudy& study,
                                const std::string& per_class_path,
                                const std::string& summary_path) {
  {
    std::ofstream out(per_class_path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_variance_study: cannot open " + per_class_path);
    out << "class\tmean_variance\n";
    for (std::size_t c = 0; c < study.class_mean_variance.size(); ++c) {
      out << c << '\t'
          << data::detail::format_double(study.class_mean_variance[c]) << "\n";
    }
  }
  std::ofstream out(summary_path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_variance_study: cannot open " + summary_path);
  out << "n\tresamples\texamples\tnormalized_variance_pct\n";
  out << study.n << '\t' << study.resamples << '\t' << study.example_ids.size()
      << '\t' << data::detail::format_double(study.normalized_variance_pct)
      << "\n";
  if (!out) throw std::runtime_error("save_variance_study: write failed for " + summary_path);
}

}  // namespace certsmooth::evaluation
