#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bisic/model.hpp"

namespace bisic::eval {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / mse) for images in [0, 1]; identical inputs give the cap.
double psnr_from_mse(double mse);
double psnr(const Tensor<float>& x, const Tensor<float>& y);

// Number of MS-SSIM scales for an image: 5 when min(H, W) >= 160, otherwise
// the most scales whose coarsest level is still >= 16 pixels. Throws
// ParameterError below 16.
int ms_ssim_scales(int64_t h, int64_t w);

// MS-SSIM of each image in [P, C, H, W] (data range 1), as a [P] variable.
// Differentiable; used as the training distortion.
template <typename T>
Var<T> ms_ssim(const Var<T>& x, const Var<T>& y);
// Single image [C, H, W].
double ms_ssim(const Tensor<float>& x, const Tensor<float>& y);

struct ViewMetrics {
  double left = 0, right = 0, avg = 0;
};

// Stereo batch of one pair, [1, 3, 2, H, W]. Reconstructions are clamped to
// [0, 1] first, as they would be when written to disk.
ViewMetrics psnr_views(const Tensor<float>& x, const Tensor<float>& x_hat);
ViewMetrics ms_ssim_views(const Tensor<float>& x, const Tensor<float>& x_hat);

// Per view: (y + z substream bytes + half of the fixed header and length
// fields) * 8 / (H * W). The average is total file bits / (2 H W).
ViewMetrics bpp(std::span<const uint8_t> container);

struct RDPoint {
  double lambda = 0;
  ViewMetrics bpp, psnr, ms_ssim;
  bool operator==(const RDPoint&) const = default;
};
bool operator==(const ViewMetrics& a, const ViewMetrics& b);
using RDCurve = std::vector<RDPoint>;

// lambda, bpp_left, bpp_right, bpp_avg, psnr_left, psnr_right, psnr_avg,
// msssim_left, msssim_right, msssim_avg. Values use shortest round-trip text.
std::string curve_csv(const RDCurve& curve);
RDCurve parse_curve_csv(const std::string& text, const std::string& what = "curve csv");
void write_curve_csv(const RDCurve& curve, const std::string& path);
RDCurve read_curve_csv(const std::string& path);

// The report variant prefixes every row with a method name.
std::vector<std::pair<std::string, RDCurve>> parse_report_csv(const std::string& text);

// Smooth fit through (x, y) points: least-squares cubic, or a monotone
// piecewise-cubic Hermite interpolant when the cubic is not monotone over
// the data range.
class CurveFit {
 public:
  CurveFit(std::vector<double> xs, std::vector<double> ys);
  double operator()(double x) const;
  double integral(double a, double b) const;
  bool uses_pchip() const { return pchip_; }
  double lo() const { return xs_.front(); }
  double hi() const { return xs_.back(); }

 private:
  std::vector<double> xs_, ys_, slopes_;
  std::array<double, 4> coef_{};  // c0 + c1 x + c2 x^2 + c3 x^3
  bool pchip_ = false;
};

// Bjontegaard deltas. Rates are bits per pixel (> 0); at least 4 points each.
// bd_rate < 0 and bd_quality > 0 mean the test curve is better.
double bd_rate(std::span<const double> rate_ref, std::span<const double> q_ref, std::span<const double> rate_test,
               std::span<const double> q_test);
double bd_quality(std::span<const double> rate_ref, std::span<const double> q_ref,
                  std::span<const double> rate_test, std::span<const double> q_test);

enum class Quality { kPsnr, kMsSsim };
double bd_rate(const RDCurve& ref, const RDCurve& test, Quality q = Quality::kPsnr);
double bd_quality(const RDCurve& ref, const RDCurve& test, Quality q = Quality::kPsnr);

// Bits spent on y at each latent position, summed over channels, per view:
// [2, h, w]. x is [1, 3, 2, H, W].
Tensor<float> bit_allocation_map(const Model<float>& model, const Tensor<float>& x);
// Grayscale PNG of one view's map, upsampled to (height, width); darker
// means more bits.
void save_bit_map(const Tensor<float>& map, int view, int64_t height, int64_t width, const std::string& path);

// Writes rd_psnr.png, rd_msssim.png, rd_points.csv (with a leading method
// column), bd_table.csv (every curve against `reference`) and notes.txt.
void emit_report(const std::vector<std::pair<std::string, RDCurve>>& curves, const std::string& reference,
                 const std::string& out_dir);

}  // namespace bisic::eval
