// SPDX-License-Identifier: Apache-2.0
// Command-line front end: plan, decompose, reconstruct, random-weights,
// train, sweep and check.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "mpolstm/check.hpp"
#include "mpolstm/error.hpp"
#include "mpolstm/io.hpp"
#include "mpolstm/mpo.hpp"
#include "mpolstm/planner.hpp"
#include "mpolstm/training.hpp"

namespace fs = std::filesystem;
using namespace mpolstm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

constexpr const char* kConfigDirEnv = "MPOLSTM_CONFIG_DIR";
constexpr const char* kDefaultConfigName = "default.json";

// Relative config paths that do not exist are looked up in $MPOLSTM_CONFIG_DIR.
// Without --config the directory's default.json is used when present.
std::optional<fs::path> resolve_config(const std::string& given) {
  const char* dir = std::getenv(kConfigDirEnv);
  if (given.empty()) {
    if (dir && fs::exists(fs::path(dir) / kDefaultConfigName)) return fs::path(dir) / kDefaultConfigName;
    return std::nullopt;
  }
  fs::path p(given);
  if (!fs::exists(p) && p.is_relative() && dir && fs::exists(fs::path(dir) / p)) return fs::path(dir) / p;
  return p;
}

ExperimentConfig config_from(const std::string& given) {
  const auto path = resolve_config(given);
  return path ? load_config(*path) : ExperimentConfig{};
}

std::vector<std::size_t> factors_or(const std::vector<std::size_t>& specific, const std::vector<std::size_t>& shared) {
  return specific.empty() ? shared : specific;
}

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (auto x : v) p *= x;
  return p;
}

void print_report_line(const char* label, const CompressionReport& r) {
  std::printf("%-8s params_w=%zu params_u=%zu params_dense=%zu rho_w=%.4f rho_u=%.4f rho_total=%.4f\n", label,
              r.params_w, r.params_u, r.params_dense, r.rho_w, r.rho_u, r.rho_total);
}

// ---------------------------------------------------------------------------

struct PlanArgs {
  double target = 0.0;
  std::size_t nx = 256, nh = 256;
  std::vector<std::size_t> factors{8, 2, 2, 8};
  std::vector<std::size_t> x_factors, h_factors;
  double slack = BondSearchOptions{}.slack;
  std::size_t max_spread = BondSearchOptions{}.max_spread;
  std::size_t curve_max = 0;
};

int run_plan(const PlanArgs& a) {
  const auto xf = factors_or(a.x_factors, a.factors);
  const auto hf = factors_or(a.h_factors, a.factors);
  if (product(xf) != a.nx || product(hf) != a.nh) {
    throw ConfigError("factor products (" + std::to_string(product(xf)) + ", " + std::to_string(product(hf)) +
                      ") do not match --nx/--nh (" + std::to_string(a.nx) + ", " + std::to_string(a.nh) + ")");
  }
  if (a.curve_max > 0) {
    std::printf("d,params_w,params_u,total\n");
    for (const CurvePoint& p : parameter_curve(xf, hf, 1, a.curve_max)) {
      std::printf("%zu,%zu,%zu,%zu\n", p.d, p.params_w, p.params_u, p.total());
    }
    return kExitOk;
  }
  const BondChoice c = bonds_for_target(a.target, xf, hf, BondSearchOptions{a.slack, a.max_spread});
  std::printf("target_rho=%g d_w=%zu d_u=%zu\n", a.target, c.d_w, c.d_u);
  print_report_line("achieved", c.report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
  std::string in, out, entry;
  std::vector<std::size_t> factors, in_factors, out_factors;
  std::size_t bond_cap = 0;  // 0 = full
};

const WeightEntry& find_entry(const WeightBundle& b, const std::string& name, bool want_dense) {
  for (const WeightEntry& e : b) {
    const bool dense = std::holds_alternative<DenseTensor>(e.value);
    if ((name.empty() && dense == want_dense) || (!name.empty() && e.name == name)) return e;
  }
  throw ConfigError(name.empty() ? std::string("no ") + (want_dense ? "dense" : "mpo") + " entry in the file"
                                 : "no entry named '" + name + "'");
}

int run_decompose(const DecomposeArgs& a) {
  const WeightBundle in = load_weights(a.in);
  const WeightEntry& e = find_entry(in, a.entry, true);
  const auto* t = std::get_if<DenseTensor>(&e.value);
  if (!t || t->rank() != 2) throw ConfigError("entry '" + e.name + "' is not a dense matrix");
  const Matrix w = as_matrix(*t);
  const auto inf = factors_or(a.in_factors, a.factors);
  const auto outf = factors_or(a.out_factors, a.factors);
  if (inf.empty() || outf.empty()) throw ConfigError("--factors or --in-factors/--out-factors are required");
  if (product(inf) != w.cols() || product(outf) != w.rows()) {
    throw ConfigError("factor products do not match the " + std::to_string(w.rows()) + "x" +
                      std::to_string(w.cols()) + " matrix");
  }
  const MpoPlan plan = a.bond_cap == 0 ? MpoPlan::full(inf, outf) : MpoPlan::uniform(inf, outf, a.bond_cap);
  const MpoDecomposition dec = decompose(w, plan);
  const Matrix r = reconstruct(dec.op);
  const double err = frobenius_distance(r.data(), w.data());
  const double norm = frobenius_norm(w);
  std::printf("entry=%s shape=%zux%zu bonds=", e.name.c_str(), w.rows(), w.cols());
  for (std::size_t k = 0; k < plan.bond_dims.size(); ++k) std::printf("%s%zu", k ? "," : "", plan.bond_dims[k]);
  std::printf("\nparams_dense=%zu params_mpo=%zu ratio=%.6g\n", w.size(), dec.op.parameter_count(),
              static_cast<double>(w.size()) / static_cast<double>(dec.op.parameter_count()));
  std::printf("reconstruction_error=%.17g relative_error=%.17g discarded_norm=%.17g\n", err,
              norm > 0 ? err / norm : 0.0, dec.discarded_norm);
  if (!a.out.empty()) save_weights(a.out, WeightBundle{{e.name, dec.op}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReconstructArgs {
  std::string in, out;
};

int run_reconstruct(const ReconstructArgs& a) {
  WeightBundle bundle = load_weights(a.in);
  std::size_t converted = 0;
  for (WeightEntry& e : bundle) {
    if (const auto* op = std::get_if<MpoOperator>(&e.value)) {
      const Matrix m = reconstruct(*op);
      std::printf("entry=%s shape=%zux%zu params_mpo=%zu\n", e.name.c_str(), m.rows(), m.cols(),
                  op->parameter_count());
      e.value = as_tensor(m);
      ++converted;
    }
  }
  if (converted == 0) throw ConfigError("no mpo entries in " + a.in);
  save_weights(a.out, bundle);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RandomArgs {
  std::size_t rows = 256, cols = 256;
  std::uint64_t seed = 0;
  std::string name = "w", out;
};

int run_random(const RandomArgs& a) {
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> nd;
  Matrix m(a.rows, a.cols);
  for (double& v : m.data()) v = nd(rng);
  save_weights(a.out, WeightBundle{{a.name, as_tensor(m)}});
  std::printf("wrote %s (%zux%zu, seed %llu)\n", a.out.c_str(), a.rows, a.cols,
              static_cast<unsigned long long>(a.seed));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct Overrides {
  std::optional<std::size_t> epochs, batch_size, jobs;
  std::optional<double> lr;
  std::vector<double> rates;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
};

void apply_overrides(ExperimentConfig& c, const Overrides& o) {
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.lr) c.train.adam.lr = *o.lr;
  if (!o.rates.empty()) c.rates = o.rates;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : o.methods) c.methods.push_back(method_from_string(m));
  }
  validate(c);
}

struct TrainArgs {
  std::string config, method = "mpo", out;
  double rate = 1.0;
  std::uint64_t seed = 1;
  Overrides over;
};

int run_train(const TrainArgs& a) {
  ExperimentConfig c = config_from(a.config);
  apply_overrides(c, a.over);
  const TrainOutcome o = train(TrialSpec{method_from_string(a.method), a.rate}, c.task, c.train, a.seed);
  const TrialResult& r = o.result;
  if (r.failed) {
    std::fprintf(stderr, "trial failed: %s\n", r.error.c_str());
    return kExitRuntime;
  }
  std::printf("method=%s rate=%g seed=%llu metric=%.6f params=%zu ratio_actual=%.4f", to_string(r.method).c_str(),
              r.rate, static_cast<unsigned long long>(r.seed), r.metric, r.parameter_count, r.ratio_actual);
  if (r.method == Method::kMpo) std::printf(" d_w=%zu d_u=%zu", r.d_w, r.d_u);
  std::printf("\nloss:");
  for (double l : r.epoch_loss) std::printf(" %.5f", l);
  std::printf("\n");
  if (!a.out.empty()) {
    const TrainedModel& m = o.model;
    WeightBundle b;
    if (m.method == Method::kMpo) {
      b.push_back({"w", m.mpo.w});
      b.push_back({"u", m.mpo.u});
      b.push_back({"b", DenseTensor({m.mpo.b.size()}, m.mpo.b)});
    } else {
      b.push_back({"w_x", as_tensor(m.dense.w_x)});
      b.push_back({"w_h", as_tensor(m.dense.w_h)});
      b.push_back({"b", DenseTensor({m.dense.b.size()}, m.dense.b)});
    }
    b.push_back({"readout_w", as_tensor(m.readout.w)});
    b.push_back({"readout_b", DenseTensor({m.readout.b.size()}, m.readout.b)});
    save_weights(a.out, b);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config, out, format;
  bool dry_run = false;
  Overrides over;
};

double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_sweep(const SweepArgs& a) {
  ExperimentConfig c = config_from(a.config);
  apply_overrides(c, a.over);

  if (a.dry_run) {
    std::printf("rate,method,seed,planned_params,planned_ratio\n");
    const std::size_t dense = dense_lstm_count(c.nx, c.nh);
    for (double rate : c.rates) {
      for (Method m : c.methods) {
        std::string params, ratio;
        if (m == Method::kDense) {
          params = std::to_string(dense);
          ratio = "1";
        } else if (m == Method::kPruning) {
          const double sparsity = 1.0 - 1.0 / rate;
          std::size_t kept = 0;
          for (std::size_t n : {4 * c.nh * c.nx, 4 * c.nh * c.nh}) {
            kept += n - static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(n)));
          }
          params = std::to_string(kept);
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(dense) / static_cast<double>(kept));
          ratio = buf;
        } else {
          try {
            const BondChoice bc = bonds_for_target(rate, c.x_factors, c.h_factors, c.train.bond_search);
            params = std::to_string(bc.report.params_w + bc.report.params_u);
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f", bc.report.rho_total);
            ratio = buf;
          } catch (const PlanningError&) {
            params = "unattainable";
            ratio = "nan";
          }
        }
        for (std::uint64_t s : c.seeds) {
          std::printf("%g,%s,%llu,%s,%s\n", rate, to_string(m).c_str(), static_cast<unsigned long long>(s),
                      params.c_str(), ratio.c_str());
        }
      }
    }
    return kExitOk;
  }

  if (a.out.empty()) throw ConfigError("--out is required unless --dry-run is given");
  const ReportFormat fmt = a.format.empty() ? report_format_for_path(a.out) : report_format_from_string(a.format);
  const SweepReport report =
      sweep(c.rates, c.methods, c.task, c.train, c.seeds, SweepOptions{c.jobs, c.record_wall_time});
  emit_report(report, fmt, a.out);

  // Summary: median metric per (rate, method).
  std::map<std::pair<double, std::string>, std::vector<double>> metrics;
  std::map<std::pair<double, std::string>, std::size_t> params, failed;
  for (const SweepRow& r : report.rows) {
    metrics[{r.rate, r.method}].push_back(r.metric);
    params[{r.rate, r.method}] = r.params;
    if (std::isnan(r.metric)) ++failed[{r.rate, r.method}];
  }
  std::printf("%-8s %-8s %-14s %-10s %s\n", "rate", "method", "median_metric", "params", "failed");
  for (const auto& [key, v] : metrics) {
    std::printf("%-8g %-8s %-14.4f %-10zu %zu/%zu\n", key.first, key.second.c_str(), median(v), params[key],
                failed[key], v.size());
  }
  std::printf("wrote %zu rows to %s\n", report.rows.size(), a.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  std::string filter;
  double tol_scale = 1.0;
  bool list = false;
};

int run_check(const CheckArgs& a) {
  if (!(a.tol_scale > 0.0)) throw ConfigError("--tol-scale must be positive");
  CheckOptions opts;
  opts.filter = a.filter;
  opts.tol_scale = a.tol_scale;
  if (a.list) {
    for (const auto& g : check_groups()) std::printf("%s\n", g.c_str());
    return kExitOk;
  }
  const auto results = run_checks(opts);
  if (results.empty()) throw ConfigError("no checks match filter '" + a.filter + "'");
  std::size_t passed = 0;
  for (const CheckResult& r : results) {
    std::printf("[%s] %-10s %-28s %s\n", r.passed ? "PASS" : "FAIL", r.group.c_str(), r.name.c_str(),
                r.detail.c_str());
    passed += r.passed;
  }
  std::printf("%zu/%zu checks passed\n", passed, results.size());
  return passed == results.size() ? kExitOk : kExitRuntime;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--epochs", o.epochs, "Override optimizer.epochs");
  cmd->add_option("--batch-size", o.batch_size, "Override optimizer.batch_size");
  cmd->add_option("--lr", o.lr, "Override optimizer.lr");
  cmd->add_option("--jobs", o.jobs, "Parallel trials (1 = serial and bitwise reproducible)");
  cmd->add_option("--rates", o.rates, "Override the compression rates")->delimiter(',');
  cmd->add_option("--methods", o.methods, "Override the methods (dense, mpo, pruning)")->delimiter(',');
  cmd->add_option("--seeds", o.seeds, "Override the seeds")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MPO compression of LSTM weight matrices"};
  app.require_subcommand(1);

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Pick bond dimensions for a target compression ratio");
  plan_cmd->add_option("--target-rho", plan.target, "Target total compression ratio");
  plan_cmd->add_option("--nx", plan.nx, "Input dimension");
  plan_cmd->add_option("--nh", plan.nh, "Hidden dimension");
  plan_cmd->add_option("--factors", plan.factors, "Factors used for both matrices")->delimiter(',');
  plan_cmd->add_option("--x-factors", plan.x_factors, "Factors of the input dimension")->delimiter(',');
  plan_cmd->add_option("--h-factors", plan.h_factors, "Factors of the hidden dimension")->delimiter(',');
  plan_cmd->add_option("--slack", plan.slack, "Allowed fractional shortfall below the target");
  plan_cmd->add_option("--max-spread", plan.max_spread, "Largest allowed |d_w - d_u|");
  plan_cmd->add_option("--curve", plan.curve_max, "Print the parameter curve for d = 1..N instead");

  DecomposeArgs dec;
  auto* dec_cmd = app.add_subcommand("decompose", "TT-SVD a dense matrix from a weight file");
  dec_cmd->add_option("--in", dec.in, "Input weight file")->required();
  dec_cmd->add_option("--out", dec.out, "Output weight file with the mpo entry");
  dec_cmd->add_option("--entry", dec.entry, "Entry name (default: first dense entry)");
  dec_cmd->add_option("--factors", dec.factors, "Factors for both rows and columns")->delimiter(',');
  dec_cmd->add_option("--in-factors", dec.in_factors, "Column factors")->delimiter(',');
  dec_cmd->add_option("--out-factors", dec.out_factors, "Row factors")->delimiter(',');
  dec_cmd->add_option("--bond-cap", dec.bond_cap, "Uniform bond cap (0 = exact)");

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Turn every mpo entry back into a dense matrix");
  rec_cmd->add_option("--in", rec.in, "Input weight file")->required();
  rec_cmd->add_option("--out", rec.out, "Output weight file")->required();

  RandomArgs rnd;
  auto* rnd_cmd = app.add_subcommand("random-weights", "Write a random Gaussian matrix");
  rnd_cmd->add_option("--rows", rnd.rows, "Rows");
  rnd_cmd->add_option("--cols", rnd.cols, "Columns");
  rnd_cmd->add_option("--seed", rnd.seed, "RNG seed");
  rnd_cmd->add_option("--name", rnd.name, "Entry name");
  rnd_cmd->add_option("--out", rnd.out, "Output weight file")->required();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train and evaluate one trial");
  tr_cmd->add_option("--config", tr.config, "Experiment config (JSON)");
  tr_cmd->add_option("--method", tr.method, "dense, mpo or pruning");
  tr_cmd->add_option("--rate", tr.rate, "Compression rate");
  tr_cmd->add_option("--seed", tr.seed, "Trial seed");
  tr_cmd->add_option("--out", tr.out, "Save trained weights here");
  add_overrides(tr_cmd, tr.over);

  SweepArgs sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Run every (rate, method, seed) trial and write a report");
  sw_cmd->add_option("--config", sw.config, "Experiment config (JSON)");
  sw_cmd->add_option("--out", sw.out, "Report path");
  sw_cmd->add_option("--format", sw.format, "csv or json (default: from the extension)");
  sw_cmd->add_flag("--dry-run", sw.dry_run, "List the planned rows without training");
  add_overrides(sw_cmd, sw.over);

  CheckArgs ck;
  auto* ck_cmd = app.add_subcommand("check", "Run the built-in invariant suite");
  ck_cmd->add_option("--filter", ck.filter, "Run only groups or checks containing this text");
  ck_cmd->add_option("--tol-scale", ck.tol_scale, "Multiply every tolerance");
  ck_cmd->add_flag("--list", ck.list, "List check groups");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*plan_cmd) {
      if (plan.curve_max == 0 && plan_cmd->count("--target-rho") == 0) {
        throw ConfigError("--target-rho is required unless --curve is given");
      }
      return run_plan(plan);
    }
    if (*dec_cmd) return run_decompose(dec);
    if (*rec_cmd) return run_reconstruct(rec);
    if (*rnd_cmd) return run_random(rnd);
    if (*tr_cmd) return run_train(tr);
    if (*sw_cmd) return run_sweep(sw);
    if (*ck_cmd) return run_check(ck);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
