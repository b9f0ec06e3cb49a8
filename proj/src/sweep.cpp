// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "mpolstm/error.hpp"
#include "mpolstm/training.hpp"

namespace mpolstm {

namespace {

SweepRow to_row(const TrialResult& r, double rate, bool record_time) {
  SweepRow row;
  row.rate = rate;
  row.method = to_string(r.method);
  row.metric = r.failed ? std::numeric_limits<double>::quiet_NaN() : r.metric;
  row.params = r.parameter_count;
  row.ratio_actual = r.ratio_actual;
  row.seed = r.seed;
  row.wall_time = record_time ? r.wall_time : 0.0;
  return row;
}

SweepRow failed_row(double rate, Method m, std::uint64_t seed) {
  SweepRow row;
  row.rate = rate;
  row.method = to_string(m);
  row.metric = std::numeric_limits<double>::quiet_NaN();
  row.seed = seed;
  return row;
}

// Runs jobs[i]() for every i on up to `workers` threads.
void run_all(std::vector<std::function<void()>>& jobs, std::size_t workers) {
  if (workers <= 1 || jobs.size() <= 1) {
    for (auto& j : jobs) j();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, jobs.size()); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) jobs[i]();
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void canonical_order(SweepReport& report) {
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.rate, a.method, a.seed) < std::tie(b.rate, b.method, b.seed);
  });
}

SweepReport sweep(std::span<const double> rates, std::span<const Method> methods, const SyntheticTask& task,
                  const TrainConfig& config, std::span<const std::uint64_t> seeds, const SweepOptions& options) {
  for (double r : rates) {
    if (!(r >= 1.0)) throw ConfigError("compression rates must be >= 1");
  }
  const bool need_dense = std::find(methods.begin(), methods.end(), Method::kPruning) != methods.end() ||
                          std::find(methods.begin(), methods.end(), Method::kDense) != methods.end();

  // Dense baselines first: pruning rows start from them and dense rows reuse them.
  std::map<std::uint64_t, TrainOutcome> baselines;
  std::mutex mu;
  std::vector<std::function<void()>> jobs;
  if (need_dense) {
    for (std::uint64_t seed : seeds) {
      jobs.emplace_back([&, seed] {
        TrainOutcome o = train(TrialSpec{Method::kDense, 1.0}, task, config, seed);
        std::lock_guard lock(mu);
        baselines.emplace(seed, std::move(o));
      });
    }
    run_all(jobs, options.jobs);
  }

  SweepReport report;
  jobs.clear();
  for (double rate : rates) {
    for (Method m : methods) {
      for (std::uint64_t seed : seeds) {
        if (m == Method::kDense) {
          report.rows.push_back(to_row(baselines.at(seed).result, rate, options.record_wall_time));
          continue;
        }
        jobs.emplace_back([&, rate, m, seed] {
          SweepRow row;
          try {
            const TrainedModel* warm = nullptr;
            if (m == Method::kPruning) {
              const TrainOutcome& base = baselines.at(seed);
              if (base.result.failed) {
                std::lock_guard lock(mu);
                report.rows.push_back(failed_row(rate, m, seed));
                return;
              }
              warm = &base.model;
            }
            const TrainOutcome o = train(TrialSpec{m, rate}, task, config, seed, warm);
            row = to_row(o.result, rate, options.record_wall_time);
          } catch (const Error&) {
            row = failed_row(rate, m, seed);
          }
          std::lock_guard lock(mu);
          report.rows.push_back(std::move(row));
        });
      }
    }
  }
  run_all(jobs, options.jobs);
  canonical_order(report);
  return report;
}

}  // namespace mpolstm
