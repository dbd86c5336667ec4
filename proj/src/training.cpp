#include "bisic/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>

#include "bisic/io.hpp"
#include "bisic/metrics.hpp"

namespace bisic {

using namespace ops;

std::string to_string(Distortion d) { return d == Distortion::kMse ? "mse" : "ms_ssim"; }

Distortion parse_distortion(const std::string& s) {
  if (s == "mse") return Distortion::kMse;
  if (s == "ms_ssim" || s == "ms-ssim" || s == "msssim") return Distortion::kMsSsim;
  throw ParameterError("unknown distortion '" + s + "' (expected mse or ms_ssim)");
}

namespace {

template <typename V>
V parse_number(const std::string& key, const std::string& value) {
  V v{};
  const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
    throw ParameterError("training option " + key + ": '" + value + "' is not a valid number");
  }
  return v;
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda > 0) || !std::isfinite(lambda)) throw ParameterError("lambda must be positive, got " + num(lambda));
  if (steps < 0) throw ParameterError("steps must be >= 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (!(lr > 0)) throw ParameterError("lr must be positive");
  if (lr_halving_interval < 1) throw ParameterError("lr_halving_interval must be >= 1");
  if (crop_size < 64 || crop_size % 64 != 0) {
    throw ParameterError("crop_size must be a positive multiple of 64, got " + std::to_string(crop_size));
  }
  if (!(clip_norm > 0)) throw ParameterError("clip_norm must be positive");
  if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be >= 0");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lambda") {
    lambda = parse_number<double>(key, value);
  } else if (key == "distortion") {
    distortion = parse_distortion(value);
  } else if (key == "steps") {
    steps = parse_number<int64_t>(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_number<int>(key, value);
  } else if (key == "lr") {
    lr = parse_number<double>(key, value);
  } else if (key == "lr_halving_interval") {
    lr_halving_interval = parse_number<int64_t>(key, value);
  } else if (key == "seed") {
    seed = parse_number<uint64_t>(key, value);
  } else if (key == "crop_size") {
    crop_size = parse_number<int>(key, value);
  } else if (key == "clip_norm") {
    clip_norm = parse_number<double>(key, value);
  } else if (key == "checkpoint_every") {
    checkpoint_every = parse_number<int64_t>(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else {
    throw ParameterError("unknown training option '" + key + "'");
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"lambda", num(lambda)},
          {"distortion", to_string(distortion)},
          {"steps", std::to_string(steps)},
          {"batch_size", std::to_string(batch_size)},
          {"lr", num(lr)},
          {"lr_halving_interval", std::to_string(lr_halving_interval)},
          {"seed", std::to_string(seed)},
          {"crop_size", std::to_string(crop_size)},
          {"clip_norm", num(clip_norm)}};
}

bool is_standard_lambda(double lambda) {
  for (double l : {256.0, 512.0, 1024.0, 2048.0, 3072.0, 4096.0})
    if (lambda == l) return true;
  return false;
}

LossBreakdown LossTerms::values() const {
  return {L.value().item(), D.value().item(), R_y.value().item(), R_z.value().item()};
}

LossTerms rd_loss(const Model<float>& model, const Var<float>& x, double lambda, Distortion distortion,
                  std::mt19937_64& noise_rng, bool bypass) {
  const int64_t B = x.dim(0), H = x.dim(3), W = x.dim(4);
  const ModelOutput<float> out = model.forward(x, Quantizer::kNoise, &noise_rng, !bypass);
  const Var<float> x_hat = bypass ? x : out.x_hat;
  LossTerms t;
  if (distortion == Distortion::kMse) {
    // Mean over (B, C, H, W) per view, summed over the two views.
    t.D = mul_scalar(mean(square(sub(x_hat, x))), 2.0f);
  } else {
    auto planes = [&](const Var<float>& v) { return reshape(permute(v, {0, 2, 1, 3, 4}), {2 * B, 3, H, W}); };
    const Var<float> s = eval::ms_ssim(planes(x_hat), planes(x));
    t.D = add_scalar(mul_scalar(sum(s), -1.0f / static_cast<float>(B)), 2.0f);
  }
  t.R_y = bits_per_pixel(out.p_y, B, H, W);
  t.R_z = bits_per_pixel(out.p_z, B, H, W);
  t.L = add(add(mul_scalar(t.D, static_cast<float>(lambda)), t.R_y), t.R_z);
  return t;
}

double learning_rate(double lr0, int64_t interval, int64_t step) {
  return lr0 * std::pow(0.5, static_cast<double>(step / interval));
}

Adam::Adam(nn::NamedParams<float> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var<float> p = params_[i].second;
    if (p.grad().empty()) continue;
    const Tensor<float>& g = p.grad();
    Tensor<float>& w = p.mutable_value();
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double gj = g[j];
      const double m = b1_ * m_[i][j] + (1 - b1_) * gj;
      const double v = b2_ * v_[i][j] + (1 - b2_) * gj * gj;
      m_[i][j] = static_cast<float>(m);
      v_[i][j] = static_cast<float>(v);
      w[j] = static_cast<float>(w[j] - lr * (m / c1) / (std::sqrt(v / c2) + eps_));
    }
  }
}

double clip_grad_norm(const nn::NamedParams<float>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, p] : params)
    for (float g : p.grad().values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (const auto& [name, p] : params) {
      Var<float> v = p;
      for (auto& g : v.mutable_grad().values()) g *= scale;
    }
  }
  return norm;
}

std::string log_csv(const std::vector<LogRow>& rows) {
  std::string s = "step,L,D,R_y,R_z,lr\n";
  for (const auto& r : rows) {
    s += std::to_string(r.step) + "," + num(r.L) + "," + num(r.D) + "," + num(r.R_y) + "," + num(r.R_z) + "," +
         num(r.lr) + "\n";
  }
  return s;
}

namespace {

constexpr int64_t kDeadWindow = 50;
constexpr double kDivergenceFactor = 1e3;

Metadata checkpoint_metadata(const TrainConfig& cfg, const Metadata& base, int64_t step) {
  Metadata m = base;
  for (const auto& [k, v] : cfg.to_map()) m[k] = v;
  const int64_t before = base.count("total_steps") ? std::stoll(base.at("total_steps")) : 0;
  m["total_steps"] = std::to_string(before + step);
  return m;
}

}  // namespace

TrainResult train(Model<float>& model, const std::vector<StereoPair>& data, const TrainConfig& cfg,
                  const Metadata& metadata, const std::function<void(const LogRow&)>& on_step) {
  cfg.validate();
  if (data.empty()) throw ParameterError("training needs at least one stereo pair");
  for (const auto& p : data) {
    if (p.left.dim(1) < cfg.crop_size || p.left.dim(2) < cfg.crop_size) {
      throw ParameterError("training pair " + p.source + " is smaller than the crop size " + std::to_string(cfg.crop_size));
    }
  }
  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.out_dir + ": " + ec.message());
  }
  std::mt19937_64 data_rng(cfg.seed * 2 + 1), noise_rng(cfg.seed * 2 + 2);
  const auto params = model.parameters();
  Adam adam(params);
  TrainResult result;
  if (!is_standard_lambda(cfg.lambda)) {
    result.warnings.push_back("lambda " + num(cfg.lambda) +
                              " is outside the standard set {256, 512, 1024, 2048, 3072, 4096}");
  }
  std::vector<bool> alive(params.size(), false);
  double first_loss = 0;

  auto save = [&](int64_t step, const std::string& name) {
    if (cfg.out_dir.empty()) return;
    const std::string path = cfg.out_dir + "/" + name;
    save_checkpoint(model, checkpoint_metadata(cfg, metadata, step), path);
    io::write_text_atomic(cfg.out_dir + "/log.csv", log_csv(result.log));
    result.checkpoints.push_back(path);
  };

  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<StereoPair> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& pair = data[static_cast<size_t>(data_rng() % data.size())];
      batch.push_back(random_crop(pair, cfg.crop_size, data_rng));
    }
    const Var<float> x = Var<float>::constant(to_batch(batch));
    model.zero_grad();
    const LossTerms t = rd_loss(model, x, cfg.lambda, cfg.distortion, noise_rng);
    const LossBreakdown v = t.values();
    if (!std::isfinite(v.L) || !std::isfinite(v.D) || !std::isfinite(v.R_y) || !std::isfinite(v.R_z)) {
      throw TrainingFault("non-finite loss at step " + std::to_string(step) + " (L=" + num(v.L) + ", D=" + num(v.D) +
                          ", R_y=" + num(v.R_y) + ", R_z=" + num(v.R_z) + ")");
    }
    const double expect = cfg.lambda * v.D + v.R_y + v.R_z;
    if (std::abs(v.L - expect) > 1e-6 * std::max(1.0, std::abs(expect))) {
      throw TrainingFault("loss identity broken at step " + std::to_string(step) + ": L=" + num(v.L) +
                          ", lambda*D+R=" + num(expect));
    }
    if (step == 0) first_loss = v.L;
    if (v.L > kDivergenceFactor * std::max(first_loss, 1e-3)) {
      throw TrainingFault("training diverged at step " + std::to_string(step) + ": L=" + num(v.L) +
                          " is over 1000x the first step's " + num(first_loss) + " (D=" + num(v.D) +
                          ", R_y=" + num(v.R_y) + ", R_z=" + num(v.R_z) + ")");
    }
    t.L.backward();
    if (step < kDeadWindow) {
      for (size_t i = 0; i < params.size(); ++i) {
        if (alive[i]) continue;
        for (float g : params[i].second.grad().values()) {
          if (g != 0.0f) {
            alive[i] = true;
            break;
          }
        }
      }
    }
    clip_grad_norm(params, cfg.clip_norm);
    const double lr = learning_rate(cfg.lr, cfg.lr_halving_interval, step);
    adam.step(lr);
    const LogRow row{step, v.L, v.D, v.R_y, v.R_z, lr};
    result.log.push_back(row);
    if (on_step) on_step(row);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
      save(step + 1, "step_" + std::to_string(step + 1) + ".bsck");
    }
  }
  model.zero_grad();
  for (size_t i = 0; i < params.size(); ++i)
    if (!alive[i] && cfg.steps > 0) result.dead_parameters.push_back(params[i].first);
  save(cfg.steps, "final.bsck");
  return result;
}

TrainResult finetune_msssim(Model<float>& model, const std::vector<StereoPair>& data, TrainConfig cfg,
                            const Metadata& metadata, const std::function<void(const LogRow&)>& on_step) {
  cfg.distortion = Distortion::kMsSsim;
  return train(model, data, cfg, metadata, on_step);
}

}  // namespace bisic
