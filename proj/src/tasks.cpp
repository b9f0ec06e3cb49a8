// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>

#include "mpolstm/error.hpp"
#include "mpolstm/training.hpp"

namespace mpolstm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ index));
}

constexpr std::size_t kSinusoidsPerCoordinate = 2;

}  // namespace

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "regression";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::kClassification;
  if (s == "regression") return TaskKind::kRegression;
  throw ConfigError("unknown task kind '" + s + "'");
}

ClassificationSet gen_classification(const SyntheticTask& task, std::size_t first, std::size_t count) {
  if (task.input_dim == 0 || task.seq_len == 0) throw ExtentError("task needs positive input_dim and seq_len");
  ClassificationSet out;
  out.sequences.reserve(count);
  out.labels.reserve(count);
  for (std::size_t n = first; n < first + count; ++n) {
    auto rng = sample_rng(task.seed, n);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> noise(0.0, 1.0);
    Sequence seq(task.seq_len, std::vector<double>(task.input_dim, 0.0));
    double sum = 0.0;
    for (auto& step : seq) {
      step[0] = coin(rng) ? 1.0 : -1.0;
      sum += step[0];
      for (std::size_t d = 1; d < task.input_dim; ++d) step[d] = task.noise_std * noise(rng);
    }
    out.sequences.push_back(std::move(seq));
    out.labels.push_back(sum > 0.0 ? 1 : 0);
  }
  return out;
}

RegressionSet gen_regression(const SyntheticTask& task, std::size_t first, std::size_t count) {
  if (task.input_dim == 0 || task.seq_len == 0) throw ExtentError("task needs positive input_dim and seq_len");
  RegressionSet out;
  out.noisy.reserve(count);
  out.clean.reserve(count);
  const std::size_t D = task.input_dim;
  for (std::size_t n = first; n < first + count; ++n) {
    auto rng = sample_rng(task.seed, n);
    std::uniform_real_distribution<double> amp(0.5, 1.0), freq(0.02, 0.2), phase(0.0, 2.0 * std::numbers::pi);
    std::vector<double> a(D * kSinusoidsPerCoordinate), w(a.size()), ph(a.size());
    double power = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] = amp(rng);
      w[k] = 2.0 * std::numbers::pi * freq(rng);
      ph[k] = phase(rng);
      power += 0.5 * a[k] * a[k];
    }
    power /= static_cast<double>(D);
    const bool noiseless = std::isinf(task.snr_db) && task.snr_db > 0.0;
    const double sigma = noiseless ? 0.0 : std::sqrt(power / std::pow(10.0, task.snr_db / 10.0));
    std::normal_distribution<double> noise(0.0, 1.0);

    Sequence clean(task.seq_len, std::vector<double>(D)), noisy = clean;
    for (std::size_t t = 0; t < task.seq_len; ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        double v = 0.0;
        for (std::size_t m = 0; m < kSinusoidsPerCoordinate; ++m) {
          const std::size_t k = d * kSinusoidsPerCoordinate + m;
          v += a[k] * std::sin(w[k] * static_cast<double>(t) + ph[k]);
        }
        clean[t][d] = v;
        noisy[t][d] = noiseless ? v : v + sigma * noise(rng);
      }
    }
    out.clean.push_back(std::move(clean));
    out.noisy.push_back(std::move(noisy));
  }
  return out;
}

}  // namespace mpolstm
