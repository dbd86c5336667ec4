#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bisic/codec.hpp"
#include "bisic/coder_backend.hpp"
#include "bisic/data.hpp"
#include "bisic/io.hpp"
#include "bisic/metrics.hpp"
#include "bisic/selftest.hpp"
#include "bisic/training.hpp"

namespace fs = std::filesystem;
using namespace bisic;

namespace {

enum Exit { kOk = 0, kUsage = 1, kFormat = 2, kIntegrity = 3, kSelftest = 4 };

struct DataOptions {
  std::string dir;
  int synthetic = 0;
  int size = 64;
};

void add_data_options(CLI::App* app, DataOptions& d, int default_synthetic) {
  d.synthetic = default_synthetic;
  app->add_option("--data", d.dir, "directory of *_left.png / *_right.png pairs");
  app->add_option("--synthetic", d.synthetic, "number of generated pairs when --data is not given")
      ->check(CLI::PositiveNumber);
  app->add_option("--size", d.size, "side of generated pairs")->check(CLI::PositiveNumber);
}

std::vector<StereoPair> load_dataset(const DataOptions& d, uint64_t seed) {
  std::vector<StereoPair> out;
  if (!d.dir.empty()) {
    if (!fs::is_directory(d.dir)) throw IoError("data directory " + d.dir + " does not exist");
    std::vector<std::string> lefts;
    for (const auto& e : fs::directory_iterator(d.dir)) {
      const std::string name = e.path().filename().string();
      if (name.size() > 9 && name.ends_with("_left.png")) lefts.push_back(e.path().string());
    }
    std::sort(lefts.begin(), lefts.end());
    for (const auto& l : lefts) {
      const std::string r = l.substr(0, l.size() - 9) + "_right.png";
      if (!fs::exists(r)) throw IoError(l + " has no matching " + r);
      out.push_back(preprocess(load_pair(l, r), CropRule::kDivisible64));
    }
    if (out.empty()) throw IoError("no *_left.png files in " + d.dir);
    return out;
  }
  for (int i = 0; i < d.synthetic; ++i) {
    SyntheticSpec s;
    s.seed = seed * 1000003 + static_cast<uint64_t>(i);
    s.height = d.size;
    s.width = d.size;
    out.push_back(generate_synthetic_pair(s));
  }
  return out;
}

// Model and training keys may share one key=value file.
void apply_config_file(const std::string& path, ModelConfig* model, TrainConfig* train) {
  if (path.empty()) return;
  for (const auto& [k, v] : parse_key_values(io::read_text(path))) {
    bool used = false;
    if (model) {
      try {
        model->set(k, v);
        used = true;
      } catch (const ParameterError&) {
      }
    }
    if (!used && train) {
      train->set(k, v);
      used = true;
    }
    if (!used) throw ParameterError("config key '" + k + "' is not valid here");
  }
}

struct ModelFlags {
  int N = 0, M = 0, K = 0;
  std::string mode, attention;
  bool backbone_2d = false, entropy_minnen = false, no_channel_context = false, vanilla_ckbd = false;

  void add(CLI::App* app) {
    app->add_option("--N", N, "latent channels");
    app->add_option("--M", M, "hyper-latent channels");
    app->add_option("--K", K, "channel slices");
    app->add_option("--mode", mode, "entropy coding mode")->check(CLI::IsMember({"ar", "ckbd"}));
    app->add_option("--attention", attention, "attention blocks")->check(CLI::IsMember({"mutual", "row", "none"}));
    app->add_flag("--backbone-2d", backbone_2d, "per-view 2D transforms");
    app->add_flag("--entropy-minnen", entropy_minnen, "single-view spatial context, no channel context");
    app->add_flag("--no-channel-context", no_channel_context, "disable the channel context");
    app->add_flag("--vanilla-ckbd", vanilla_ckbd, "per-view checkerboard context");
  }

  void apply(ModelConfig& c) const {
    if (N) c.N = N;
    if (M) c.M = M;
    if (K) c.K = K;
    if (!mode.empty()) c.mode = parse_coding_mode(mode);
    if (!attention.empty()) c.ablations.attention = parse_attention_mode(attention);
    if (backbone_2d) c.ablations.backbone_2d = true;
    if (entropy_minnen) c.ablations.entropy_minnen = true;
    if (no_channel_context) c.ablations.channel_context_off = true;
    if (vanilla_ckbd) c.ablations.vanilla_ckbd = true;
  }
};

struct TrainFlags {
  double lambda = 0, lr = 0, clip_norm = 0;
  int64_t steps = -1, lr_halving = 0, checkpoint_every = -1;
  int batch_size = 0, crop = 0, log_every = 100;
  std::string distortion;

  void add(CLI::App* app, bool with_distortion) {
    app->add_option("--lambda", lambda, "rate-distortion trade-off");
    app->add_option("--steps", steps, "optimizer steps");
    app->add_option("--batch-size", batch_size, "pairs per step");
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--lr-halving", lr_halving, "steps between learning-rate halvings");
    app->add_option("--crop", crop, "training crop side (multiple of 64)");
    app->add_option("--clip-norm", clip_norm, "global gradient norm limit");
    app->add_option("--checkpoint-every", checkpoint_every, "steps between intermediate checkpoints");
    app->add_option("--log-every", log_every, "steps between progress lines")->check(CLI::PositiveNumber);
    if (with_distortion) {
      app->add_option("--distortion", distortion, "distortion measure")->check(CLI::IsMember({"mse", "ms_ssim"}));
    }
  }

  void apply(TrainConfig& t) const {
    if (lambda) t.lambda = lambda;
    if (steps >= 0) t.steps = steps;
    if (batch_size) t.batch_size = batch_size;
    if (lr) t.lr = lr;
    if (lr_halving) t.lr_halving_interval = lr_halving;
    if (crop) t.crop_size = crop;
    if (clip_norm) t.clip_norm = clip_norm;
    if (checkpoint_every >= 0) t.checkpoint_every = checkpoint_every;
    if (!distortion.empty()) t.distortion = parse_distortion(distortion);
  }
};

std::shared_ptr<const rc::Backend> pick_backend(const std::string& choice) {
  std::string note;
  auto b = rc::select_backend(rc::parse_backend_choice(choice), "", &note);
  if (!note.empty() && std::getenv("BISIC_NATIVE_CODER")) std::cerr << "note: " << note << "\n";
  return b;
}

bool deterministic() {
  const char* v = std::getenv("BISIC_DETERMINISTIC");
  return v && std::string(v) != "0";
}

TrainResult run_training(Model<float>& model, const std::vector<StereoPair>& data, const TrainConfig& cfg,
                         const Metadata& meta, int log_every, bool msssim) {
  const auto t0 = std::chrono::steady_clock::now();
  auto progress = [&](const LogRow& r) {
    if ((r.step + 1) % log_every == 0 || r.step + 1 == cfg.steps) {
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "step %6lld  L %.4f  D %.6f  R_y %.4f  R_z %.4f  lr %.3g  (%.0fs)\n",
                   static_cast<long long>(r.step + 1), r.L, r.D, r.R_y, r.R_z, r.lr, sec);
    }
  };
  if (!is_standard_lambda(cfg.lambda)) {
    std::cerr << "warning: lambda " << cfg.lambda << " is outside the standard set {256, 512, 1024, 2048, 3072, 4096}\n";
  }
  auto r = msssim ? finetune_msssim(model, data, cfg, meta, progress) : train(model, data, cfg, meta, progress);
  for (const auto& name : r.dead_parameters) std::cerr << "warning: no gradient reached " << name << "\n";
  for (const auto& c : r.checkpoints) std::cout << "wrote " << c << "\n";
  return r;
}

Tensor<float> load_input(const std::string& left, const std::string& right, bool crop) {
  StereoPair p = load_pair(left, right);
  if (crop) p = preprocess(p, CropRule::kDivisible64);
  if (p.height() % 64 || p.left.dim(2) % 64) {
    throw ShapeError("image size " + std::to_string(p.height()) + "x" + std::to_string(p.left.dim(2)) +
                     " is not a multiple of 64 (use --crop)");
  }
  return to_batch(std::vector<StereoPair>{p});
}

eval::RDPoint evaluate(const Checkpoint& ck, const std::vector<StereoPair>& data,
                       const std::shared_ptr<const rc::Backend>& backend, const std::string& bitmap_dir) {
  eval::RDPoint pt;
  const auto it = ck.metadata.find("lambda");
  if (it == ck.metadata.end()) throw FormatError("checkpoint has no lambda in its metadata");
  pt.lambda = std::stod(it->second);
  codec::Options opt{backend};
  for (size_t i = 0; i < data.size(); ++i) {
    const auto x = to_batch(std::vector<StereoPair>{data[i]});
    const auto enc = codec::compress(*ck.model, x, opt);
    const auto dec = codec::decompress(*ck.model, enc.bytes, opt);
    const auto b = eval::bpp(enc.bytes);
    const auto p = eval::psnr_views(x, dec.x_hat);
    const auto s = eval::ms_ssim_views(x, dec.x_hat);
    auto acc = [](eval::ViewMetrics& a, const eval::ViewMetrics& v) {
      a.left += v.left;
      a.right += v.right;
      a.avg += v.avg;
    };
    acc(pt.bpp, b);
    acc(pt.psnr, p);
    acc(pt.ms_ssim, s);
    if (!bitmap_dir.empty() && i == 0) {
      fs::create_directories(bitmap_dir);
      const auto map = eval::bit_allocation_map(*ck.model, x);
      const std::string stem = bitmap_dir + "/bits_lambda" + it->second;
      eval::save_bit_map(map, 0, x.dim(3), x.dim(4), stem + "_left.png");
      eval::save_bit_map(map, 1, x.dim(3), x.dim(4), stem + "_right.png");
    }
  }
  const double n = static_cast<double>(data.size());
  for (auto* m : {&pt.bpp, &pt.psnr, &pt.ms_ssim}) {
    m->left /= n;
    m->right /= n;
    m->avg /= n;
  }
  return pt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bidirectional stereo image codec"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bisic 0.1.0");
  uint64_t seed = 0;
  std::string config_path;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write synthetic stereo pairs as PNG files");
  std::string gen_out;
  int gen_count = 10;
  SyntheticSpec gen_spec;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of pairs")->check(CLI::PositiveNumber);
  gen->add_option("--height", gen_spec.height, "image height");
  gen->add_option("--width", gen_spec.width, "image width");
  gen->add_option("--disparity", gen_spec.disparity, "horizontal shift between views");
  gen->add_option("--noise", gen_spec.noise_level, "per-view noise level");
  gen->add_option("--occlusion", gen_spec.occlusion_fraction, "fraction of occluded area");
  gen->add_option("--seed", seed, "random seed");

  // train
  auto* tr = app.add_subcommand("train", "train a model on stereo pairs");
  DataOptions tr_data;
  ModelFlags tr_model;
  TrainFlags tr_flags;
  std::string tr_out;
  add_data_options(tr, tr_data, 64);
  tr_model.add(tr);
  tr_flags.add(tr, true);
  tr->add_option("--out", tr_out, "output directory for checkpoints and log.csv")->required();
  tr->add_option("--seed", seed, "random seed");
  tr->add_option("--config", config_path, "key=value file with model and training settings");

  // finetune
  auto* ft = app.add_subcommand("finetune", "continue training an MSE model with MS-SSIM distortion");
  DataOptions ft_data;
  TrainFlags ft_flags;
  std::string ft_model, ft_out;
  add_data_options(ft, ft_data, 64);
  ft_flags.add(ft, false);
  ft->add_option("--model", ft_model, "MSE-trained checkpoint")->required();
  ft->add_option("--out", ft_out, "output directory")->required();
  ft->add_option("--seed", seed, "random seed");
  ft->add_option("--config", config_path, "key=value file with training settings");

  // compress
  auto* cp = app.add_subcommand("compress", "code a stereo pair into a .bsic file");
  std::string cp_left, cp_right, cp_model, cp_mode, cp_out, cp_coder = "auto";
  bool cp_crop = false;
  cp->add_option("--in-left", cp_left, "left image")->required();
  cp->add_option("--in-right", cp_right, "right image")->required();
  cp->add_option("--model", cp_model, "checkpoint")->required();
  cp->add_option("--mode", cp_mode, "must match the model's mode")->check(CLI::IsMember({"ar", "ckbd"}));
  cp->add_option("--out", cp_out, "output .bsic file")->required();
  cp->add_option("--coder", cp_coder, "range coder backend")->check(CLI::IsMember({"auto", "reference", "native"}));
  cp->add_flag("--crop", cp_crop, "center-crop to a multiple of 64 instead of failing");

  // decompress
  auto* dc = app.add_subcommand("decompress", "decode a .bsic file into two images");
  std::string dc_in, dc_model, dc_left, dc_right, dc_coder = "auto";
  dc->add_option("--in", dc_in, "input .bsic file")->required();
  dc->add_option("--model", dc_model, "checkpoint used for compression")->required();
  dc->add_option("--out-left", dc_left, "left PNG")->required();
  dc->add_option("--out-right", dc_right, "right PNG")->required();
  dc->add_option("--coder", dc_coder, "range coder backend")->check(CLI::IsMember({"auto", "reference", "native"}));

  // eval
  auto* ev = app.add_subcommand("eval", "rate-distortion points for checkpoints across lambdas");
  DataOptions ev_data;
  std::vector<std::string> ev_models;
  std::string ev_out, ev_bitmaps, ev_coder = "reference";
  add_data_options(ev, ev_data, 10);
  ev->add_option("--model", ev_models, "checkpoint (repeat for each lambda)")->required();
  ev->add_option("--out", ev_out, "curve CSV");
  ev->add_option("--bitmaps", ev_bitmaps, "directory for bit allocation maps of the first pair");
  ev->add_option("--coder", ev_coder, "range coder backend")->check(CLI::IsMember({"auto", "reference", "native"}));
  ev->add_option("--seed", seed, "seed for generated test pairs");

  // bd
  auto* bd = app.add_subcommand("bd", "Bjontegaard deltas of a test curve against a reference");
  std::string bd_ref, bd_test;
  bd->add_option("reference", bd_ref, "reference curve CSV")->required();
  bd->add_option("test", bd_test, "test curve CSV")->required();

  // plot
  auto* pl = app.add_subcommand("plot", "render RD plots and the BD table");
  std::vector<std::string> pl_curves;
  std::string pl_ref, pl_out;
  pl->add_option("--curve", pl_curves, "name=path of a curve CSV (repeatable)")->required();
  pl->add_option("--reference", pl_ref, "name of the reference curve (default: first)");
  pl->add_option("--out", pl_out, "output directory")->required();

  // selftest
  auto* st = app.add_subcommand("selftest", "causality, round-trip and gradient checks on random-init models");
  bool st_quick = false;
  st->add_flag("--quick", st_quick, "fewer trials");
  st->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (deterministic()) std::cerr << "deterministic mode\n";

    if (gen->parsed()) {
      gen_spec.validate();
      fs::create_directories(gen_out);
      for (int i = 0; i < gen_count; ++i) {
        SyntheticSpec s = gen_spec;
        s.seed = seed * 1000003 + static_cast<uint64_t>(i);
        const auto p = generate_synthetic_pair(s);
        char stem[32];
        std::snprintf(stem, sizeof stem, "pair_%04d", i);
        save_image(gen_out + "/" + stem + "_left.png", p.left);
        save_image(gen_out + "/" + stem + "_right.png", p.right);
      }
      std::cout << "wrote " << gen_count << " pairs to " << gen_out << "\n";
      return kOk;
    }

    if (tr->parsed()) {
      ModelConfig mc;
      TrainConfig tc;
      apply_config_file(config_path, &mc, &tc);
      tr_model.apply(mc);
      tr_flags.apply(tc);
      tc.seed = seed;
      tc.out_dir = tr_out;
      mc.validate();
      tc.validate();
      const auto data = load_dataset(tr_data, seed);
      Model<float> model(mc, seed);
      run_training(model, data, tc, {}, tr_flags.log_every, false);
      return kOk;
    }

    if (ft->parsed()) {
      auto ck = load_checkpoint(ft_model);
      if (ck.metadata.count("distortion") && ck.metadata.at("distortion") != "mse") {
        throw ParameterError(ft_model + " was not trained with MSE distortion");
      }
      TrainConfig tc;
      for (const auto& [k, v] : ck.metadata) {
        if (k == "lambda" || k == "batch_size" || k == "crop_size" || k == "clip_norm") tc.set(k, v);
      }
      tc.steps = 500;
      apply_config_file(config_path, nullptr, &tc);
      ft_flags.apply(tc);
      tc.seed = seed;
      tc.out_dir = ft_out;
      tc.validate();
      const auto data = load_dataset(ft_data, seed);
      run_training(*ck.model, data, tc, ck.metadata, ft_flags.log_every, true);
      return kOk;
    }

    if (cp->parsed()) {
      const auto ck = load_checkpoint(cp_model);
      if (!cp_mode.empty() && parse_coding_mode(cp_mode) != ck.model->config().mode) {
        throw ParameterError("--mode " + cp_mode + " does not match the model, which was built for " +
                             to_string(ck.model->config().mode));
      }
      const auto x = load_input(cp_left, cp_right, cp_crop);
      const auto backend = pick_backend(cp_coder);
      const auto enc = codec::compress(*ck.model, x, codec::Options{backend});
      io::write_file_atomic(cp_out, enc.bytes);
      const auto b = eval::bpp(enc.bytes);
      std::printf("%s: %zu bytes, bpp left %.4f right %.4f avg %.4f, %.2fs (%s coder)\n", cp_out.c_str(),
                  enc.bytes.size(), b.left, b.right, b.avg, enc.stats.seconds, backend->name().c_str());
      return kOk;
    }

    if (dc->parsed()) {
      const auto ck = load_checkpoint(dc_model);
      const auto bytes = io::read_file(dc_in);
      const auto dec = codec::decompress(*ck.model, bytes, codec::Options{pick_backend(dc_coder)});
      const auto p = from_batch(dec.x_hat, 0);
      save_image(dc_left, p.left);
      save_image(dc_right, p.right);
      std::printf("decoded %dx%d pair in %.2fs\n", dec.header.height, dec.header.width, dec.stats.seconds);
      return kOk;
    }

    if (ev->parsed()) {
      const auto data = load_dataset(ev_data, seed);
      const auto backend = pick_backend(ev_coder);
      eval::RDCurve curve;
      for (const auto& path : ev_models) {
        const auto ck = load_checkpoint(path);
        curve.push_back(evaluate(ck, data, backend, ev_bitmaps));
        const auto& pt = curve.back();
        std::printf("lambda %-6g bpp %.4f  psnr %.3f dB  ms-ssim %.5f\n", pt.lambda, pt.bpp.avg, pt.psnr.avg,
                    pt.ms_ssim.avg);
      }
      std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
      if (!ev_out.empty()) eval::write_curve_csv(curve, ev_out);
      return kOk;
    }

    if (bd->parsed()) {
      const auto ref = eval::read_curve_csv(bd_ref);
      const auto test = eval::read_curve_csv(bd_test);
      std::printf("BD-rate (PSNR):    %.2f%%\n", eval::bd_rate(ref, test, eval::Quality::kPsnr));
      std::printf("BD-PSNR:           %.4f dB\n", eval::bd_quality(ref, test, eval::Quality::kPsnr));
      std::printf("BD-rate (MS-SSIM): %.2f%%\n", eval::bd_rate(ref, test, eval::Quality::kMsSsim));
      return kOk;
    }

    if (pl->parsed()) {
      std::vector<std::pair<std::string, eval::RDCurve>> curves;
      for (const auto& spec : pl_curves) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw ParameterError("--curve expects name=path, got '" + spec + "'");
        curves.emplace_back(spec.substr(0, eq), eval::read_curve_csv(spec.substr(eq + 1)));
      }
      eval::emit_report(curves, pl_ref.empty() ? curves.front().first : pl_ref, pl_out);
      std::cout << "wrote report to " << pl_out << "\n";
      return kOk;
    }

    if (st->parsed()) {
      const auto checks = selftest::run(st_quick, seed);
      std::cout << selftest::format_table(checks);
      const bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
      std::cout << (ok ? "all checks passed\n" : "some checks FAILED\n");
      return ok ? kOk : kSelftest;
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const CoderError& e) {
    std::cerr << "coder error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
