#include "mmsa/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmsa/env.hpp"
#include "mmsa/params.hpp"

namespace mmsa {

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw ConfigError("runner: cannot create \"" + path + "\": " + ec.message());
}

void write_manifest(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("runner: cannot write \"" + path + "\"");
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  out << "mmsa run manifest v1\n"
      << "config_hash = " << hash << '\n'
      << "created = " << utc_timestamp() << '\n'
      << "seed = " << cfg.trainer.seed << '\n'
      << "variant = " << variant_name(cfg.trainer) << '\n'
      << "\n[config]\n"
      << render_config(cfg);
}

RunConfig read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("runner: cannot open manifest \"" + path + "\"");
  std::string line, config_text, recorded_hash;
  bool in_config = false;
  while (std::getline(in, line)) {
    if (line == "[config]") {
      in_config = true;
      continue;
    }
    if (in_config) {
      config_text += line;
      config_text += '\n';
    } else if (line.rfind("config_hash = ", 0) == 0) {
      recorded_hash = line.substr(14);
    }
  }
  if (!in_config) throw ConfigError("runner: manifest \"" + path + "\" has no [config] section");
  const RunConfig cfg = parse_config(config_text);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  if (recorded_hash != hash)
    throw ConfigError("runner: manifest \"" + path + "\" hash mismatch (recorded " +
                      recorded_hash + ", config hashes to " + hash + ")");
  return cfg;
}

std::string loss_record_json(const LossReport& r) {
  std::string out = "{\"step\":" + std::to_string(r.step);
  out += ",\"l_kl\":" + format_double(r.l_kl);
  out += ",\"l_rec\":" + format_double(r.l_rec);
  out += ",\"l_td\":" + format_double(r.l_td);
  out += ",\"l_sale\":" + format_double(r.l_sale);
  out += ",\"l_total\":" + format_double(r.l_total);
  out += ",\"epsilon\":" + format_double(r.epsilon);
  out += ",\"grad_norms\":{";
  bool first = true;
  for (const auto& [name, v] : r.grad_norms) {
    if (!first) out += ',';
    first = false;
    out += '"' + name + "\":" + format_double(v);
  }
  out += "}}";
  return out;
}

std::string eval_record_json(long long step, const EvalReport& r, const std::string& variant) {
  std::string out = "{\"step\":" + std::to_string(step);
  out += ",\"mean_return\":" + format_double(r.mean_return);
  out += ",\"returns\":[";
  for (std::size_t i = 0; i < r.returns.size(); ++i) {
    if (i) out += ',';
    out += format_double(r.returns[i]);
  }
  out += "],\"variant\":\"" + variant + "\"}";
  return out;
}

RunResult run_training(const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  const RunPaths paths{dir};
  write_manifest(paths.manifest(), cfg);

  Trainer trainer(make_env(cfg.env_name, cfg.trainer.gamma), cfg.trainer);
  std::ofstream metrics(paths.metrics(), std::ios::binary);
  if (!metrics) throw ConfigError("runner: cannot write \"" + paths.metrics() + "\"");

  const std::string variant = variant_name(cfg.trainer);
  RunResult result;
  result.dir = dir;
  trainer.run(
      [&](const LossReport& r) {
        metrics << loss_record_json(r) << '\n';
        if (cfg.checkpoint_interval > 0 && r.step % cfg.checkpoint_interval == 0)
          save_checkpoint(paths.checkpoint_at(r.step),
                          std::as_const(trainer.nets()).all_groups());
      },
      [&](long long step, const EvalReport& r) {
        metrics << eval_record_json(step, r, variant) << '\n';
        metrics.flush();  // evaluations close a phase; keep partial runs usable
        result.final_mean_return = r.mean_return;
      });
  metrics.close();
  save_checkpoint(paths.final_checkpoint(), std::as_const(trainer.nets()).all_groups());
  result.env_steps = trainer.env_steps();
  result.grad_steps = trainer.grad_steps();
  return result;
}

EvalReport evaluate_run(const std::string& dir) {
  const RunPaths paths{dir};
  const RunConfig cfg = read_manifest(paths.manifest());
  Trainer trainer(make_env(cfg.env_name, cfg.trainer.gamma), cfg.trainer);
  auto groups = trainer.nets().all_groups();
  load_checkpoint(paths.final_checkpoint(), groups);
  return trainer.evaluate();
}

std::vector<RunVariant> ablation_grid() {
  std::vector<RunVariant> grid;
  for (const auto& v : ablation_variants()) grid.push_back({v, {{"ablate.variant", v}}});
  return grid;
}

std::vector<RunVariant> design_grid(const std::string& axis) {
  std::vector<RunVariant> grid;
  if (axis == "horizon") {
    for (const char* h : {"1", "2", "3", "10"})
      grid.push_back({std::string("horizon_") + h, {{"wm.rollout_horizon", h}}});
  } else if (axis == "lr") {
    for (const char* lr : {"0.001", "0.0005", "0.0001"})
      grid.push_back({std::string("lr_") + lr, {{"train.lr", lr}}});
  } else if (axis == "norm") {
    for (const char* n : {"avg_l1", "none", "layer_norm"})
      grid.push_back({std::string("norm_") + n, {{"sale.normalizer", n}}});
  } else {
    throw ConfigError("design axis \"" + axis + "\" unknown (valid: horizon, lr, norm)");
  }
  return grid;
}

std::vector<GridResult> run_grid(const RunConfig& base, const std::vector<RunVariant>& variants,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::string& out_root) {
  std::vector<GridResult> results;
  for (const auto& variant : variants) {
    for (const std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      for (const auto& [key, value] : variant.overrides) config_set(cfg, key, value);
      config_set(cfg, "train.seed", std::to_string(seed));
      const std::string dir = out_root + "/" + variant.label + "_seed" + std::to_string(seed);
      const RunResult run = run_training(cfg, dir);
      results.push_back({variant.label, seed, dir, run.final_mean_return});
    }
  }
  return results;
}

std::string summary_csv(const std::vector<GridResult>& results) {
  std::vector<std::string> order;
  for (const auto& r : results)
    if (std::find(order.begin(), order.end(), r.label) == order.end()) order.push_back(r.label);

  std::string out = "variant,n_seeds,mean_return,ci_lo,ci_hi\n";
  for (const auto& label : order) {
    std::vector<double> xs;
    for (const auto& r : results)
      if (r.label == label) xs.push_back(r.final_mean_return);
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double half = xs.size() > 1 ? 1.96 * std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
    out += label + ',' + std::to_string(xs.size()) + ',' + format_double(mean) + ',' +
           format_double(mean - half) + ',' + format_double(mean + half) + '\n';
  }
  return out;
}

}  // namespace mmsa
