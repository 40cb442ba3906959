#include "qsep/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace qsep {

double lr_schedule(long iteration, const Hyper& hyper) {
  if (iteration < hyper.decay_start) return hyper.lr0;
  if (hyper.decay_set_mode) return std::max(hyper.lr_floor, hyper.decay_step);
  long n = (iteration - hyper.decay_start) / hyper.decay_every + 1;
  double lr = hyper.lr0 - hyper.decay_step * static_cast<double>(n);
  return std::max(hyper.lr_floor, lr);
}

Tensor reparameterize(Graph* g, const LatentDist& dist, Rng& rng) {
  Tensor eps = Tensor::randn(dist.mu.shape(), rng);
  Tensor sigma = exp_op(g, scale(g, dist.logvar, 0.5));
  return add(g, dist.mu, mul(g, sigma, eps));
}

Tensor loss_reconstruction(Graph* g, const Tensor& target_mag,
                           const Tensor& est_mag) {
  return reduce_all(g, Reduce::kMean, abs_op(g, sub(g, est_mag, target_mag)));
}

Tensor loss_kl(Graph* g, const LatentDist& dist) {
  Tensor mu2 = mul(g, dist.mu, dist.mu);
  Tensor ev = exp_op(g, dist.logvar);
  Tensor term = sub(g, add(g, mu2, ev), add_scalar(g, dist.logvar, 1.0));
  return scale(g, reduce_all(g, Reduce::kSum, term), 0.5);
}

Tensor loss_latent_regressor(Graph* g, const Tensor& z_drawn,
                             const Tensor& recovered_mu) {
  return reduce_all(g, Reduce::kMean, abs_op(g, sub(g, z_drawn, recovered_mu)));
}

StepReport train_step(ParamSet& params, std::vector<AdamState>& adam,
                      const ModelConfig& config, const Hyper& hyper,
                      const std::vector<MixtureSample>& batch, long iteration,
                      uint64_t run_seed) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (adam.size() != params.count())
    throw std::invalid_argument("train_step: adam state count mismatch");

  for (Tensor& t : params.tensors) t.zero_grad();

  Rng rng(Rng::mix(Rng::mix(run_seed, 0x57e9a11dULL),
                   static_cast<uint64_t>(iteration)));
  Graph g;
  Tensor sum_r, sum_kl, sum_lat;
  for (const MixtureSample& s : batch) {
    LatentDist dist = query_encode(&g, params, config, s.target_mag);
    Tensor z = reparameterize(&g, dist, rng);
    Tensor est = separate(&g, params, config, s.mix_mag, z).est;
    Tensor lr_i = loss_reconstruction(&g, s.target_mag, est);
    Tensor lkl_i = loss_kl(&g, dist);

    Tensor z_drawn = Tensor::randn({config.d_z, 1}, rng);
    Tensor est2 = separate(&g, params, config, s.mix_mag, z_drawn).est;
    LatentDist back = query_encode(&g, params, config, est2);
    Tensor llat_i = loss_latent_regressor(&g, z_drawn, back.mu);

    sum_r = sum_r.defined() ? add(&g, sum_r, lr_i) : lr_i;
    sum_kl = sum_kl.defined() ? add(&g, sum_kl, lkl_i) : lkl_i;
    sum_lat = sum_lat.defined() ? add(&g, sum_lat, llat_i) : llat_i;
  }
  double inv_b = 1.0 / static_cast<double>(batch.size());
  Tensor mean_r = scale(&g, sum_r, inv_b);
  Tensor mean_kl = scale(&g, sum_kl, inv_b);
  Tensor mean_lat = scale(&g, sum_lat, inv_b);
  Tensor total = add(
      &g, add(&g, scale(&g, mean_r, hyper.lambda_r),
              scale(&g, mean_kl, hyper.lambda_kl)),
      scale(&g, mean_lat, hyper.lambda_latent));
  if (!std::isfinite(total.value()))
    throw std::runtime_error("train_step: non-finite loss at iteration " +
                             std::to_string(iteration));
  g.backward(total);

  double sq = 0.0;
  for (const Tensor& t : params.tensors) {
    if (!t.has_grad()) continue;
    const double* gd = t.grad_data();
    for (std::size_t i = 0; i < t.size(); ++i) sq += gd[i] * gd[i];
  }
  double grad_norm = std::sqrt(sq);
  if (grad_norm > hyper.clip_norm && grad_norm > 0.0) {
    double f = hyper.clip_norm / grad_norm;
    for (Tensor& t : params.tensors) {
      if (!t.has_grad()) continue;
      double* gd = t.grad_values().data();
      for (std::size_t i = 0; i < t.size(); ++i) gd[i] *= f;
    }
  }

  AdamHyper ah;
  ah.lr = lr_schedule(iteration, hyper);
  ah.beta1 = hyper.beta1;
  ah.beta2 = hyper.beta2;
  ah.eps = hyper.adam_eps;
  adam_step(params.tensors, adam, ah);

  StepReport rep;
  rep.iteration = iteration;
  rep.l_r = mean_r.value();
  rep.l_kl = mean_kl.value();
  rep.l_latent = mean_lat.value();
  rep.l_total = total.value();
  rep.grad_norm = grad_norm;
  rep.lr = ah.lr;
  return rep;
}

TrainSummary train_loop(const ModelConfig& config, const Hyper& hyper,
                        const StemPool& pool, const TrainOptions& opts) {
  config.validate();
  if (opts.out_dir.empty())
    throw std::invalid_argument("train_loop: out_dir is required");
  if (hyper.batch < 1) throw std::invalid_argument("train_loop: batch < 1");
  std::filesystem::create_directories(opts.out_dir);

  ParamSet params;
  std::vector<AdamState> adam;
  long start = 0;
  if (!opts.resume.empty()) {
    Checkpoint ck = load_checkpoint(opts.resume);
    if (!(ck.config == config))
      throw std::runtime_error(
          "train_loop: checkpoint config differs from requested config");
    params = std::move(ck.params);
    adam = std::move(ck.adam);
    start = ck.iteration;
  } else {
    params = init_params(config, opts.seed);
    adam.assign(params.count(), AdamState{});
  }

  TrainSummary out;
  out.checkpoint_path = (std::filesystem::path(opts.out_dir) / "checkpoint.qsep")
                            .string();
  out.log_path = (std::filesystem::path(opts.out_dir) / "loss.log").string();
  std::ofstream log(out.log_path, start > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("train_loop: cannot open " + out.log_path);

  SpectroSetup setup = config.spectro();
  uint64_t data_seed = Rng::mix(opts.seed, 0xda7a5eedULL);
  for (long it = start; it < opts.iterations; ++it) {
    MixtureSampler sampler(pool, setup, Rng::mix(data_seed,
                                                 static_cast<uint64_t>(it)));
    std::vector<MixtureSample> batch;
    batch.reserve(hyper.batch);
    for (int b = 0; b < hyper.batch; ++b) batch.push_back(sampler.next());

    StepReport rep = train_step(params, adam, config, hyper, batch, it,
                                opts.seed);
    char line[256];
    std::snprintf(line, sizeof line, "%ld\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g",
                  rep.iteration, rep.l_r, rep.l_kl, rep.l_latent, rep.l_total,
                  rep.lr);
    log << line << '\n';
    if (!log) throw std::runtime_error("train_loop: write failed");

    if (out.iterations_run == 0) out.first = rep;
    out.last = rep;
    ++out.iterations_run;
    if (opts.checkpoint_every > 0 && (it + 1) % opts.checkpoint_every == 0 &&
        it + 1 < opts.iterations)
      save_checkpoint(out.checkpoint_path, config, params, adam, it + 1);
  }
  log.flush();
  save_checkpoint(out.checkpoint_path, config, params, adam, opts.iterations);
  return out;
}

}  // namespace qsep
