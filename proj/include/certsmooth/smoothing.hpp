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

// Monte Carlo randomized smoothing: Gaussian noise sampling, per-class
// counts, the PREDICT decision rule, certification with Clopper-Pearson
// lower bounds, and the certified-radius formulas.

#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "certsmooth/model.hpp"
#include "certsmooth/numerics.hpp"
#include "certsmooth/rng.hpp"

namespace certsmooth::smoothing {

using numerics::Probability;

/// Decision value for an abstaining certifier.
inline constexpr int kAbstain = -1;

/// All tunables of the certification procedures: noise level sigma,
/// estimation sample count n, selection sample count n0, failure rate alpha,
/// and the master seed for the counter-based noise streams.
struct SmoothingParams {
  double sigma = 0.5;
  std::uint64_t n = 10000;
  std::uint64_t n0 = 100;
  double alpha = 0.001;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("SmoothingParams: sigma must be > 0");
    if (n0 < 1 || n < n0) throw std::invalid_argument("SmoothingParams: require n >= n0 >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("SmoothingParams: alpha must be in (0, 1)");
  }
};

/// Per-example class counts from a Monte Carlo sampling pass.
struct CountsRecord {
  std::int64_t example_id = 0;
  int label = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t n_total = 0;
  double sigma = 0.0;
};

/// Result of one certification: the decision (class or kAbstain), the
/// certified L2 radius (0 when abstaining), the lower bound on the top-class
/// probability, and the wall time of the call.
struct CertOutcome {
  int decision = kAbstain;
  double radius = 0.0;
  double p_a_lower = 0.0;
  std::chrono::duration<double, std::milli> elapsed{0.0};

  bool abstained() const { return decision == kAbstain; }
};

namespace detail {

// Draws are organized in fixed-size batches so the counts are independent of
// how the batch range is split across workers.
inline constexpr std::uint64_t kSampleBatch = 1024;

inline void count_batch_range(const model::NetworkParams& f, const double* x,
                              double sigma, std::uint64_t n,
                              std::uint64_t stream_seed,
                              std::uint64_t batch_begin,
                              std::uint64_t batch_end,
                              std::vector<std::uint64_t>& counts) {
  const std::size_t dim = f.input_dim();
  std::vector<double> noisy(dim);
  model::Workspace ws;
  ws.resize_for(f);
  for (std::uint64_t b = batch_begin; b < batch_end; ++b) {
    rng::CounterRng gen(rng::derive(stream_seed, b));
    const std::uint64_t lo = b * kSampleBatch;
    const std::uint64_t hi = std::min(n, lo + kSampleBatch);
    for (std::uint64_t i = lo; i < hi; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        noisy[d] = x[d] + sigma * gen.next_gaussian();
      }
      counts[static_cast<std::size_t>(model::classify(f, noisy.data(), ws))]++;
    }
  }
}

inline std::pair<int, int> top_two(const std::vector<std::uint64_t>& counts) {
  int first = 0;
  int second = -1;
  for (int c = 1; c < static_cast<int>(counts.size()); ++c) {
    if (counts[c] > counts[first]) {
      second = first;
      first = c;
    } else if (second < 0 || counts[c] > counts[second]) {
      second = c;
    }
  }
  return {first, second};
}

}  // namespace detail

/// Class counts over n draws of f(x + eps), eps ~ N(0, sigma^2 I).
/// Deterministic in (stream_seed, x, n, sigma) and independent of how the
/// work is split: each fixed batch of draws has its own derived key, and
/// per-worker partial counts merge by elementwise addition.
inline std::vector<std::uint64_t> sample_counts(const model::NetworkParams& f,
                                                std::span<const double> x,
                                                double sigma, std::uint64_t n,
                                                std::uint64_t stream_seed,
                                                unsigned threads = 1) {
  if (x.size() != f.input_dim()) {
    throw std::invalid_argument("sample_counts: input dim mismatch");
  }
  if (n < 1 || !(sigma > 0.0)) {
    throw std::invalid_argument("sample_counts: require n >= 1 and sigma > 0");
  }
  const std::uint64_t n_batches = (n + detail::kSampleBatch - 1) / detail::kSampleBatch;
  std::vector<std::uint64_t> counts(f.num_classes(), 0);
  if (threads <= 1 || n_batches < 2) {
    detail::count_batch_range(f, x.data(), sigma, n, stream_seed, 0, n_batches,
                              counts);
    return counts;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(threads, n_batches));
  std::vector<std::vector<std::uint64_t>> partials(
      workers, std::vector<std::uint64_t>(f.num_classes(), 0));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::uint64_t begin = n_batches * w / workers;
      const std::uint64_t end = n_batches * (w + 1) / workers;
      detail::count_batch_range(f, x.data(), sigma, n, stream_seed, begin, end,
                                partials[w]);
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& partial : partials) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += partial[c];
  }
  return counts;
}

/// PREDICT: draws n0 counts, takes the top two classes, and returns the top
/// class only if the two-sided binomial test rejects a fair split at level
/// alpha; otherwise abstains.
inline int predict(const model::NetworkParams& f, std::span<const double> x,
                   const SmoothingParams& params, std::int64_t example_id = 0,
                   unsigned threads = 1) {
  params.validate();
  const auto counts = sample_counts(
      f, x, params.sigma, params.n0,
      rng::derive(params.seed, static_cast<std::uint64_t>(example_id),
                  rng::kSelectionStream),
      threads);
  const auto [c_a, c_b] = detail::top_two(counts);
  const std::uint64_t k_a = counts[static_cast<std::size_t>(c_a)];
  const std::uint64_t k_b = c_b >= 0 ? counts[static_cast<std::size_t>(c_b)] : 0;
  const double pvalue = numerics::binomial_two_sided_pvalue(k_a, k_b);
  return pvalue <= params.alpha ? c_a : kAbstain;
}

/// Certified radius sigma * Phi^-1(p_a_lower) from a lower bound above 1/2.
inline double certified_radius(double p_a_lower, double sigma) {
  return sigma *
         numerics::gaussian_quantile(numerics::clamp_probability(p_a_lower));
}

/// Two-sided radius (sigma / 2) * (Phi^-1(p_A) - Phi^-1(p_B)). Reduces to
/// sigma * Phi^-1(p_A) when p_b_upper = 1 - p_a_lower.
inline double radius_two_sided(Probability p_a_lower, Probability p_b_upper,
                               double sigma) {
  const double pa = p_a_lower.value();
  const double pb = p_b_upper.value();
  if (pa < pb) {
    throw std::invalid_argument("radius_two_sided: require p_a_lower >= p_b_upper");
  }
  if (pa <= 0.0 || pa >= 1.0 || pb <= 0.0 || pb >= 1.0) {
    throw std::invalid_argument("radius_two_sided: bounds must be inside (0, 1)");
  }
  return 0.5 * sigma *
         (numerics::gaussian_quantile(Probability(pa)) -
          numerics::gaussian_quantile(Probability(pb)));
}

/// Monte Carlo certification: a selection pass of n0 draws picks the
/// candidate class, a disjoint estimation pass of n draws yields its count,
/// and the Clopper-Pearson lower bound decides. Returns the certified radius
/// only when the bound exceeds 1/2.
inline CertOutcome certify_mc(const model::NetworkParams& f,
                              std::span<const double> x,
                              const SmoothingParams& params,
                              std::int64_t example_id = 0,
                              unsigned threads = 1) {
  params.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t id = static_cast<std::uint64_t>(example_id);

  const auto selection = sample_counts(
      f, x, params.sigma, params.n0,
      rng::derive(params.seed, id, rng::kSelectionStream), threads);
  const int candidate = detail::top_two(selection).first;

  const auto estimation = sample_counts(
      f, x, params.sigma, params.n,
      rng::derive(params.seed, id, rng::kEstimationStream), threads);
  const std::uint64_t k_a = estimation[static_cast<std::size_t>(candidate)];
  const double p_lower = numerics::clopper_pearson_lower(
      k_a, params.n, Probability(params.alpha));

  CertOutcome outcome;
  outcome.p_a_lower = p_lower;
  if (p_lower > 0.5) {
    outcome.decision = candidate;
    outcome.radius = certified_radius(p_lower, params.sigma);
  }
  outcome.elapsed = std::chrono::steady_clock::now() - start;
  return outcome;
}

}  // namespace certsmooth::smoothing
