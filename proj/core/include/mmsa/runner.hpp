#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmsa/config.hpp"
#include "mmsa/trainer.hpp"

namespace mmsa {

// Run-directory plumbing shared by the command-line tool: manifests,
// JSON-lines metrics, checkpoint placement, and the training / grid drivers.
// A run directory always holds manifest.txt, metrics.jsonl and
// checkpoint_final.ckpt; everything needed to reproduce the run is in the
// manifest.

struct RunPaths {
  std::string dir;
  std::string manifest() const { return dir + "/manifest.txt"; }
  std::string metrics() const { return dir + "/metrics.jsonl"; }
  std::string final_checkpoint() const { return dir + "/checkpoint_final.ckpt"; }
  std::string checkpoint_at(long long grad_step) const {
    return dir + "/checkpoint_" + std::to_string(grad_step) + ".ckpt";
  }
};

// mkdir -p. Throws ConfigError when the path cannot be created.
void ensure_dir(const std::string& path);

// manifest.txt: header line, config hash, creation timestamp, seed, then a
// [config] section holding the canonical rendering of every key.
void write_manifest(const std::string& path, const RunConfig& cfg);

// Reload the resolved config from a manifest. Throws ConfigError when the
// file is missing or its recorded hash does not match the parsed config.
RunConfig read_manifest(const std::string& path);

// One JSON object per line, fixed field order, shortest-round-trip doubles;
// identical reports serialize to identical bytes.
// {"step":..,"l_kl":..,"l_rec":..,"l_td":..,"l_sale":..,"l_total":..,
//  "epsilon":..,"grad_norms":{..}}
std::string loss_record_json(const LossReport& r);
// {"step":..,"mean_return":..,"returns":[..],"variant":".."}
// Eval records are distinguished by the presence of mean_return.
std::string eval_record_json(long long step, const EvalReport& r, const std::string& variant);

struct RunResult {
  std::string dir;
  double final_mean_return = 0.0;
  long long env_steps = 0;
  long long grad_steps = 0;
};

// Full training run into dir: writes the manifest up front, streams metrics
// per gradient step and evaluation, checkpoints every
// run.checkpoint_interval gradient steps (0 = final only; the final
// checkpoint is always written).
RunResult run_training(const RunConfig& cfg, const std::string& dir);

// Rebuild the trainer from a run's manifest, load its final checkpoint, and
// run one greedy evaluation.
EvalReport evaluate_run(const std::string& dir);

// A grid cell label plus the config overrides that realize it.
struct RunVariant {
  std::string label;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// The five mechanism-removal variants, "full" first.
std::vector<RunVariant> ablation_grid();
// Design-study axes: "horizon" {1,2,3,10}, "lr" {1e-3,5e-4,1e-4},
// "norm" {avg_l1,none,layer_norm}. Unknown axes throw ConfigError.
std::vector<RunVariant> design_grid(const std::string& axis);

struct GridResult {
  std::string label;
  std::uint64_t seed = 0;
  std::string dir;
  double final_mean_return = 0.0;
};

// Sequential sweep: every variant x every seed, run directories named
// <out_root>/<label>_seed<k>. Returns one result per cell in sweep order.
std::vector<GridResult> run_grid(const RunConfig& base, const std::vector<RunVariant>& variants,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::string& out_root);

// variant,n_seeds,mean_return,ci_lo,ci_hi with a 95% normal-approximation
// interval (1.96 s / sqrt(n)) over the per-seed final mean returns; one seed
// collapses the interval onto the mean.
std::string summary_csv(const std::vector<GridResult>& results);

}  // namespace mmsa
