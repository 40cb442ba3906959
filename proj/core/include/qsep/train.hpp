#pragma once

#include <string>
#include <vector>

#include "qsep/data.hpp"
#include "qsep/model.hpp"

namespace qsep {

struct Hyper {
  double lambda_r = 10.0;
  double lambda_kl = 0.01;
  double lambda_latent = 0.5;
  double lr0 = 2e-4;
  long decay_start = 200000;
  long decay_every = 10000;
  double decay_step = 5e-6;
  double lr_floor = 1e-7;
  // Alternative reading of the decay rule: jump to decay_step after the
  // boundary instead of subtracting it repeatedly.
  bool decay_set_mode = false;
  double beta1 = 0.5, beta2 = 0.999, adam_eps = 1e-8;
  int batch = 5;
  double clip_norm = 5.0;
};

// lr0 before decay_start; afterwards lr0 - decay_step * n with n counting
// started decay_every blocks, floored at lr_floor.
double lr_schedule(long iteration, const Hyper& hyper);

// z = mu + exp(logvar/2) * eps with eps ~ N(0, I); gradients flow into
// mu and logvar, not eps.
Tensor reparameterize(Graph* g, const LatentDist& dist, Rng& rng);

// Mean absolute error over all bins.
Tensor loss_reconstruction(Graph* g, const Tensor& target_mag,
                           const Tensor& est_mag);

// 1/2 sum_d (mu_d^2 + exp(logvar_d) - 1 - logvar_d).
Tensor loss_kl(Graph* g, const LatentDist& dist);

// Mean absolute error between the drawn latent and the recovered mean.
Tensor loss_latent_regressor(Graph* g, const Tensor& z_drawn,
                             const Tensor& recovered_mu);

struct StepReport {
  long iteration = 0;
  double l_r = 0, l_kl = 0, l_latent = 0, l_total = 0;
  double grad_norm = 0;
  double lr = 0;
};

// One optimization step over a batch: the cVAE branch (encode target,
// reparameterize, separate, reconstruction + KL) plus the regressor
// branch (separate with a fresh z' ~ N(0,I), re-encode, recover z').
// Losses are batch means. Gradients are clipped at clip_norm before the
// Adam update. Draws depend only on (run_seed, iteration), so resumed
// runs replay identically.
StepReport train_step(ParamSet& params, std::vector<AdamState>& adam,
                      const ModelConfig& config, const Hyper& hyper,
                      const std::vector<MixtureSample>& batch, long iteration,
                      uint64_t run_seed);

struct TrainOptions {
  long iterations = 1000;
  long checkpoint_every = 0;  // 0: only the final checkpoint
  uint64_t seed = 1;
  std::string out_dir;
  std::string resume;  // checkpoint path to continue from
};

struct TrainSummary {
  std::string checkpoint_path, log_path;
  long iterations_run = 0;
  StepReport first, last;
};

// Samples a fresh batch per iteration (sampler seeded from the iteration
// index), runs train_step, appends one loss-log line per iteration, and
// writes checkpoints. Log line: iter, L_R, L_KL, L_latent, L_total, lr,
// tab-separated.
TrainSummary train_loop(const ModelConfig& config, const Hyper& hyper,
                        const StemPool& pool, const TrainOptions& opts);

}  // namespace qsep
