#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmsa/rng.hpp"
#include "mmsa/tabular.hpp"

namespace mmsa {

// Independent oracles for the library's core guarantees: finite-difference
// gradient audits, mixer monotonicity and greedy consistency, KL-balancing
// identities, gradient decoupling, and an evidence/ELBO cross-check on
// enumerable models. Each check is callable on its own (the acceptance gate
// pins its instance counts) or through run_verification_suite.

// ---------------- evidence and ELBO oracles ----------------

// Behavior data for one episode: actions a_0..a_T and observation tuples
// o_1..o_T. a_0 only conditions the first transition; it contributes no
// policy likelihood term.
struct TabularTrajectory {
  std::vector<std::vector<int>> actions;  // [T+1][n_agents]
  std::vector<std::vector<int>> obs;      // [T][n_agents]; obs[k] is o_{k+1}
  int horizon() const { return static_cast<int>(obs.size()); }
};

// Rolls the model forward under its own behavior policy for T steps.
TabularTrajectory sample_trajectory(const TabularDecPomdp& m, int T, Rng& rng);

// log p(a_1..a_T, o_1..o_T | a_0) by the forward (filtering) recursion.
// Throws std::invalid_argument on malformed data or a zero-probability
// observation.
double exact_evidence(const TabularDecPomdp& m, const TabularTrajectory& tr);

// Same quantity by enumerating every hidden state path; exponential in the
// horizon, usable only as an oracle on small models.
double naive_evidence(const TabularDecPomdp& m, const TabularTrajectory& tr);

// One-step posterior q(s_t | s_{t-1}, joint a_{t-1}, o_t). s_prev == -1
// denotes the chain start (the state before the first latent). The returned
// distribution must put mass only on states whose observation tuple equals
// the conditioning tuple; symbols are deterministic per state, so this keeps
// every sampled observation likelihood at exactly 1.
using PosteriorFn = std::function<std::vector<double>(
    int s_prev, int joint_a, const std::vector<int>& obs_tuple)>;

// Random softmax-table posterior restricted to the consistent support.
PosteriorFn make_random_posterior(const TabularDecPomdp& m, Rng rng);

// Exact one-step filter: q(s) proportional to the transition prior on the
// consistent support. Tight (zero-variance, gap 0) when the observation map
// is injective; a valid lower bound always.
PosteriorFn make_filtering_posterior(const TabularDecPomdp& m);

struct ElboEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int n_samples = 0;
};

// Monte-Carlo evidence lower bound under q. Satisfies
//   E[value] <= exact_evidence(m, tr)
// for any admissible q, with equality for the filter under injective
// observations.
ElboEstimate elbo_estimate(const TabularDecPomdp& m, const PosteriorFn& q,
                           const TabularTrajectory& tr, int n_samples, Rng& rng);

// ---------------- runnable checks ----------------

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  // Run only checks whose name contains one of these substrings; empty = all.
  std::vector<std::string> only;
  // Fault injection: swaps the corresponding check's subject for a variant
  // with a planted bug, to demonstrate the detector catches that bug class.
  // The affected check is expected to FAIL while the flag is set.
  bool inject_nonmonotone_mixer = false;
  bool inject_unstopped_sale_target = false;
};

// Central-difference audit of every differentiable tensor op (h = 1e-5,
// relative error floor 1e-6, threshold 1e-4), instances_per_op fresh random
// instances per op with inputs drawn away from non-differentiable kinks.
VerifyCheck check_tensorcore_gradients(std::uint64_t seed, int instances_per_op);

// d(Q_tot)/d(q_i) >= 0 for every agent on fresh random mixers and inputs:
// analytic gradients plus +1e-4 per-agent perturbations (exact >= compare).
// With inject_sign_fault the subject is a local mixing head whose first
// weight matrix skips the |.|, which the same detector must flag.
VerifyCheck check_mixer_monotonicity(std::uint64_t seed, int n_draws,
                                     bool inject_sign_fault);

// Per-agent greedy selection equals the exhaustive joint argmax of Q_tot on
// a 2-agent, 3-action mixer (all 9 joints enumerated per draw).
VerifyCheck check_mixer_greedy_consistency(std::uint64_t seed, int n_draws);

// Balanced KL against plain KL on random Gaussian pairs: identical value
// (<= 1e-12) and gradients scaled by exactly alpha / (1 - alpha) on the
// posterior / prior side (relative 1e-9), alpha = 0.8.
VerifyCheck check_kl_balancing(std::uint64_t seed, int n_pairs);

// Gradient-stop audit: the embedding-prediction target trains nothing, and
// TD error through the mixer's rollout slot leaves the encoders untouched.
// With inject_unstopped_target the stop on the prediction target is dropped
// and the check must fail.
VerifyCheck check_decoupling(std::uint64_t seed, bool inject_unstopped_target);

// ELBO <= exact evidence within 1e-6 + 3 * MC standard error, on random
// enumerable models (<= 8 states, horizon <= 6) with random posteriors;
// forward recursion cross-checked against path enumeration per model.
VerifyCheck check_elbo_bound(std::uint64_t seed, int n_models, int n_samples);

// Filtering posterior on injective-observation models: zero-variance
// estimate equal to the exact evidence (<= 1e-9).
VerifyCheck check_elbo_tightness(std::uint64_t seed, int n_models, int n_samples);

std::vector<VerifyCheck> run_verification_suite(const VerifyOptions& opt);
bool all_passed(const std::vector<VerifyCheck>& checks);
// {"seed":..,"checks":[{"name":..,"pass":..,"detail":..,"seconds":..}],"all_passed":..}
std::string verify_report_json(const std::vector<VerifyCheck>& checks,
                               std::uint64_t seed);

}  // namespace mmsa
