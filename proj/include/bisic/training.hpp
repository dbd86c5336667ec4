#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "bisic/data.hpp"
#include "bisic/model.hpp"

namespace bisic {

enum class Distortion { kMse, kMsSsim };
std::string to_string(Distortion d);
Distortion parse_distortion(const std::string& s);

struct TrainConfig {
  double lambda = 512;
  Distortion distortion = Distortion::kMse;
  int64_t steps = 2000;
  int batch_size = 8;
  double lr = 1e-4;
  int64_t lr_halving_interval = 500;
  uint64_t seed = 0;
  int crop_size = 64;
  double clip_norm = 1.0;
  int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string out_dir;           // empty: no files written

  void validate() const;
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
};

// Lambdas used for the published rate points.
bool is_standard_lambda(double lambda);

struct LossBreakdown {
  double L = 0, D = 0, R_y = 0, R_z = 0;
};

struct LossTerms {
  Var<float> L, D, R_y, R_z;
  LossBreakdown values() const;
};

// L = lambda * D + R_y + R_z. D sums the per-view distortion (MSE or
// 1 - MS-SSIM); rates are bits per pixel per view summed over the views. All
// terms are averaged over the batch. With `bypass` the reconstruction is
// replaced by the input, so D = 0.
LossTerms rd_loss(const Model<float>& model, const Var<float>& x, double lambda, Distortion distortion,
                  std::mt19937_64& noise_rng, bool bypass = false);

// lr * 0.5^floor(step / interval), steps counted from 0.
double learning_rate(double lr0, int64_t interval, int64_t step);

class Adam {
 public:
  explicit Adam(nn::NamedParams<float> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  int64_t steps() const { return t_; }

 private:
  nn::NamedParams<float> params_;
  std::vector<Tensor<float>> m_, v_;
  double b1_, b2_, eps_;
  int64_t t_ = 0;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(const nn::NamedParams<float>& params, double max_norm);

struct LogRow {
  int64_t step = 0;
  double L = 0, D = 0, R_y = 0, R_z = 0, lr = 0;
};
std::string log_csv(const std::vector<LogRow>& rows);

struct TrainResult {
  std::vector<LogRow> log;
  // Parameters whose gradient stayed exactly zero over the first 50 steps.
  std::vector<std::string> dead_parameters;
  std::vector<std::string> checkpoints;
  std::vector<std::string> warnings;
};

// Adam on random crops of `data`. Writes log.csv and checkpoints under
// cfg.out_dir when set. Throws TrainingFault on a non-finite loss, a loss
// above 1000x the first step's, or a broken L = lambda D + R identity.
TrainResult train(Model<float>& model, const std::vector<StereoPair>& data, const TrainConfig& cfg,
                  const Metadata& metadata = {}, const std::function<void(const LogRow&)>& on_step = {});

// Continues training with MS-SSIM distortion.
TrainResult finetune_msssim(Model<float>& model, const std::vector<StereoPair>& data, TrainConfig cfg,
                            const Metadata& metadata = {}, const std::function<void(const LogRow&)>& on_step = {});

}  // namespace bisic
