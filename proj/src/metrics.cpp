#include "bisic/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "bisic/codec.hpp"
#include "bisic/io.hpp"

namespace bisic::eval {

using namespace ops;

double psnr_from_mse(double mse) {
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Tensor<float>& x, const Tensor<float>& y) {
  if (x.shape() != y.shape()) throw ShapeError("psnr: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  if (x.numel() == 0) throw ShapeError("psnr of an empty image");
  double se = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(x.numel()));
}

// ------------------------------------------------------------------ MS-SSIM

namespace {

constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Normalized Gaussian taps; the window shrinks to the largest odd size that
// fits when a coarse scale is smaller than 11 pixels.
template <typename T>
Var<T> gaussian_taps(int size, bool horizontal) {
  std::vector<T> g(static_cast<size_t>(size));
  double total = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - size / 2;
    total += (g[static_cast<size_t>(i)] = static_cast<T>(std::exp(-d * d / (2 * kWindowSigma * kWindowSigma))));
  }
  for (auto& v : g) v = static_cast<T>(v / total);
  return Var<T>::constant(Tensor<T>(horizontal ? Shape{1, 1, 1, 1, size} : Shape{1, 1, 1, size, 1}, g));
}

int window_for(int64_t extent) {
  const int64_t k = std::min<int64_t>(kWindow, extent % 2 ? extent : extent - 1);
  return static_cast<int>(k);
}

// Separable valid Gaussian filter of every plane of [P, C, H, W].
template <typename T>
Var<T> blur(const Var<T>& x) {
  const int64_t P = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const ConvGeometry g;
  Var<T> t = reshape(x, {P * C, 1, 1, H, W});
  t = conv3d(t, gaussian_taps<T>(window_for(W), true), Var<T>(), g);
  t = conv3d(t, gaussian_taps<T>(window_for(H), false), Var<T>(), g);
  return reshape(t, {P, C, t.dim(3), t.dim(4)});
}

template <typename T>
Var<T> per_image_mean(const Var<T>& m) {
  const int64_t n = m.numel() / m.dim(0);
  return mul_scalar(sum_axes(m, {1, 2, 3}, false), static_cast<T>(1.0 / static_cast<double>(n)));
}

}  // namespace

int ms_ssim_scales(int64_t h, int64_t w) {
  const int64_t m = std::min(h, w);
  if (m < 16) throw ParameterError("MS-SSIM needs images of at least 16x16, got " + std::to_string(h) + "x" + std::to_string(w));
  if (m >= 160) return 5;
  int s = 1;
  while (s < 5 && (m >> s) >= 16) ++s;
  return s;
}

template <typename T>
Var<T> ms_ssim(const Var<T>& x, const Var<T>& y) {
  if (x.shape() != y.shape() || x.ndim() != 4) {
    throw ShapeError("ms_ssim expects two [P, C, H, W] tensors, got " + shape_str(x.shape()) + " and " +
                     shape_str(y.shape()));
  }
  const int scales = ms_ssim_scales(x.dim(2), x.dim(3));
  double wsum = 0;
  for (int i = 0; i < scales; ++i) wsum += kScaleWeights[static_cast<size_t>(i)];
  Var<T> a = x, b = y, score;
  for (int s = 0; s < scales; ++s) {
    const Var<T> mu1 = blur(a), mu2 = blur(b);
    const Var<T> mu11 = square(mu1), mu22 = square(mu2), mu12 = mul(mu1, mu2);
    const Var<T> s11 = sub(blur(square(a)), mu11);
    const Var<T> s22 = sub(blur(square(b)), mu22);
    const Var<T> s12 = sub(blur(mul(a, b)), mu12);
    const Var<T> cs = div(add_scalar(mul_scalar(s12, T(2)), static_cast<T>(kC2)), add_scalar(add(s11, s22), static_cast<T>(kC2)));
    Var<T> term;
    if (s + 1 < scales) {
      term = per_image_mean(cs);
      a = avg_pool2(a);
      b = avg_pool2(b);
    } else {
      const Var<T> lum =
          div(add_scalar(mul_scalar(mu12, T(2)), static_cast<T>(kC1)), add_scalar(add(mu11, mu22), static_cast<T>(kC1)));
      term = per_image_mean(mul(lum, cs));
    }
    term = pow_scalar(clamp_min(term, static_cast<T>(1e-8)), static_cast<T>(kScaleWeights[static_cast<size_t>(s)] / wsum));
    score = score.defined() ? mul(score, term) : term;
  }
  return score;
}

double ms_ssim(const Tensor<float>& x, const Tensor<float>& y) {
  if (x.ndim() != 3) throw ShapeError("ms_ssim expects [C, H, W], got " + shape_str(x.shape()));
  NoGradGuard ng;
  Shape s{1, x.dim(0), x.dim(1), x.dim(2)};
  const auto r = ms_ssim(Var<double>::constant(x.cast<double>().reshaped(s)), Var<double>::constant(y.cast<double>().reshaped(s)));
  return r.value()[0];
}

namespace {

Tensor<float> view_image(const Tensor<float>& t, int v, bool clamp01) {
  if (t.ndim() != 5 || t.dim(0) != 1 || t.dim(2) != 2) throw ShapeError("expected [1, C, 2, H, W], got " + shape_str(t.shape()));
  const int64_t C = t.dim(1), H = t.dim(3), W = t.dim(4);
  Tensor<float> out(Shape{C, H, W});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        const float x = t.at(0, c, v, i, j);
        out[(c * H + i) * W + j] = clamp01 ? std::clamp(x, 0.0f, 1.0f) : x;
      }
  return out;
}

}  // namespace

ViewMetrics psnr_views(const Tensor<float>& x, const Tensor<float>& x_hat) {
  ViewMetrics m;
  m.left = psnr(view_image(x, 0, false), view_image(x_hat, 0, true));
  m.right = psnr(view_image(x, 1, false), view_image(x_hat, 1, true));
  m.avg = 0.5 * (m.left + m.right);
  return m;
}

ViewMetrics ms_ssim_views(const Tensor<float>& x, const Tensor<float>& x_hat) {
  ViewMetrics m;
  m.left = ms_ssim(view_image(x, 0, false), view_image(x_hat, 0, true));
  m.right = ms_ssim(view_image(x, 1, false), view_image(x_hat, 1, true));
  m.avg = 0.5 * (m.left + m.right);
  return m;
}

ViewMetrics bpp(std::span<const uint8_t> container) {
  const codec::Container c = codec::unpack(container);
  const double pixels = static_cast<double>(c.header.height) * c.header.width;
  const double fixed_bits = 8.0 * (codec::kHeaderBytes + 4 * 4);
  auto view_bits = [&](int z, int y) {
    return 8.0 * static_cast<double>(c.streams[static_cast<size_t>(z)].size() + c.streams[static_cast<size_t>(y)].size()) +
           fixed_bits / 2;
  };
  ViewMetrics m;
  m.left = view_bits(codec::kZLeft, codec::kYLeft) / pixels;
  m.right = view_bits(codec::kZRight, codec::kYRight) / pixels;
  m.avg = 8.0 * static_cast<double>(container.size()) / (2 * pixels);
  return m;
}

bool operator==(const ViewMetrics& a, const ViewMetrics& b) {
  return a.left == b.left && a.right == b.right && a.avg == b.avg;
}

// ------------------------------------------------------------------------ CSV

namespace {

const char* kCsvHeader =
    "lambda,bpp_left,bpp_right,bpp_avg,psnr_left,psnr_right,psnr_avg,msssim_left,msssim_right,msssim_avg";

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_num(const std::string& s, const std::string& what, size_t line) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw FormatError(what + ": line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string row(const RDPoint& p) {
  return num(p.lambda) + "," + num(p.bpp.left) + "," + num(p.bpp.right) + "," + num(p.bpp.avg) + "," +
         num(p.psnr.left) + "," + num(p.psnr.right) + "," + num(p.psnr.avg) + "," + num(p.ms_ssim.left) + "," +
         num(p.ms_ssim.right) + "," + num(p.ms_ssim.avg);
}

RDPoint parse_row(const std::vector<std::string>& f, size_t first, const std::string& what, size_t line) {
  if (f.size() != first + 10) {
    throw FormatError(what + ": line " + std::to_string(line) + " has " + std::to_string(f.size()) + " fields");
  }
  std::array<double, 10> v{};
  for (size_t i = 0; i < 10; ++i) v[i] = parse_num(f[first + i], what, line);
  return RDPoint{v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}, {v[7], v[8], v[9]}};
}

}  // namespace

std::string curve_csv(const RDCurve& curve) {
  std::string s = std::string(kCsvHeader) + "\n";
  for (const auto& p : curve) s += row(p) + "\n";
  return s;
}

RDCurve parse_curve_csv(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split(line) != split(kCsvHeader)) {
    throw FormatError(what + ": expected header '" + std::string(kCsvHeader) + "'");
  }
  RDCurve c;
  size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    c.push_back(parse_row(split(line), 0, what, n));
  }
  return c;
}

std::vector<std::pair<std::string, RDCurve>> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != std::string("method,") + kCsvHeader) {
    throw FormatError("report csv: unexpected header");
  }
  std::vector<std::pair<std::string, RDCurve>> out;
  size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split(line);
    if (out.empty() || out.back().first != f[0]) out.emplace_back(f[0], RDCurve{});
    out.back().second.push_back(parse_row(f, 1, "report csv", n));
  }
  return out;
}

void write_curve_csv(const RDCurve& curve, const std::string& path) { io::write_text_atomic(path, curve_csv(curve)); }

RDCurve read_curve_csv(const std::string& path) { return parse_curve_csv(io::read_text(path), path); }

// ------------------------------------------------------------- Bjontegaard

namespace {

// Fritsch-Carlson derivatives, as in the usual monotone cubic interpolant.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  std::vector<double> h(n - 1), d(n - 1), m(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    d[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) return {d[0], d[0]};
  for (size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] * d[i] <= 0) continue;
    const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
    m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0) {
      s = 0;
    } else if (d0 * d1 <= 0 && std::abs(s) > std::abs(3 * d0)) {
      s = 3 * d0;
    }
    return s;
  };
  m[0] = end_slope(h[0], h[1], d[0], d[1]);
  m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
  return m;
}

}  // namespace

CurveFit::CurveFit(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 4) throw ParameterError("a curve fit needs at least 4 points");
  std::vector<size_t> idx(xs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  for (size_t i : idx) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw ParameterError("curve points must be finite");
    xs_.push_back(xs[i]);
    ys_.push_back(ys[i]);
  }
  for (size_t i = 1; i < xs_.size(); ++i) {
    if (xs_[i] <= xs_[i - 1]) throw ParameterError("curve points must have distinct abscissae");
  }
  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = xs_[static_cast<size_t>(i)];
    A(i, 0) = 1;
    A(i, 1) = x;
    A(i, 2) = x * x;
    A(i, 3) = x * x * x;
    b(i) = ys_[static_cast<size_t>(i)];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  for (int i = 0; i < 4; ++i) coef_[static_cast<size_t>(i)] = c(i);

  // Monotone over the data range iff the derivative keeps one sign there.
  const double a2 = 3 * coef_[3], a1 = 2 * coef_[2], a0 = coef_[1];
  auto deriv = [&](double x) { return (a2 * x + a1) * x + a0; };
  std::vector<double> probes{lo(), hi()};
  if (a2 != 0) {
    const double disc = a1 * a1 - 4 * a2 * a0;
    if (disc > 0) {
      for (double r : {(-a1 - std::sqrt(disc)) / (2 * a2), (-a1 + std::sqrt(disc)) / (2 * a2)}) {
        if (r > lo() && r < hi()) pchip_ = true;
      }
    }
  } else if (a1 != 0) {
    const double r = -a0 / a1;
    if (r > lo() && r < hi()) pchip_ = true;
  }
  const double trend = ys_.back() - ys_.front();
  if (!pchip_ && (deriv(lo()) * trend < 0 || deriv(hi()) * trend < 0)) pchip_ = true;
  if (pchip_) slopes_ = pchip_slopes(xs_, ys_);
}

double CurveFit::operator()(double x) const {
  if (!pchip_) return ((coef_[3] * x + coef_[2]) * x + coef_[1]) * x + coef_[0];
  size_t i = static_cast<size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
  i = std::clamp<size_t>(i, 1, xs_.size() - 1) - 1;
  const double h = xs_[i + 1] - xs_[i], t = (x - xs_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * ys_[i] + (t3 - 2 * t2 + t) * h * slopes_[i] + (-2 * t3 + 3 * t2) * ys_[i + 1] +
         (t3 - t2) * h * slopes_[i + 1];
}

double CurveFit::integral(double a, double b) const {
  if (!pchip_) {
    auto F = [&](double x) {
      return ((((coef_[3] / 4) * x + coef_[2] / 3) * x + coef_[1] / 2) * x + coef_[0]) * x;
    };
    return F(b) - F(a);
  }
  // 3-point Gauss-Legendre is exact on each cubic piece.
  double total = 0;
  std::vector<double> cuts{a};
  for (double x : xs_)
    if (x > a && x < b) cuts.push_back(x);
  cuts.push_back(b);
  static const double g = std::sqrt(3.0 / 5.0);
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double m = 0.5 * (cuts[i] + cuts[i + 1]), r = 0.5 * (cuts[i + 1] - cuts[i]);
    total += r * (5.0 / 9.0 * (*this)(m - g * r) + 8.0 / 9.0 * (*this)(m) + 5.0 / 9.0 * (*this)(m + g * r));
  }
  return total;
}

namespace {

void check_points(std::span<const double> r, std::span<const double> q, const char* which) {
  if (r.size() != q.size() || r.size() < 4) {
    throw ParameterError(std::string(which) + " curve needs at least 4 (rate, quality) points");
  }
  for (double v : r)
    if (!(v > 0)) throw ParameterError(std::string(which) + " curve has a non-positive rate");
}

std::vector<double> log_rates(std::span<const double> r) {
  std::vector<double> out;
  for (double v : r) out.push_back(std::log10(v));
  return out;
}

std::pair<double, double> overlap(double lo1, double hi1, double lo2, double hi2, const char* axis) {
  const double lo = std::max(lo1, lo2), hi = std::min(hi1, hi2);
  if (!(hi > lo)) {
    throw OverlapError(std::string("curves do not overlap in ") + axis + ": reference [" + num(lo1) + ", " +
                       num(hi1) + "], test [" + num(lo2) + ", " + num(hi2) + "]");
  }
  return {lo, hi};
}

}  // namespace

double bd_rate(std::span<const double> rate_ref, std::span<const double> q_ref, std::span<const double> rate_test,
               std::span<const double> q_test) {
  check_points(rate_ref, q_ref, "reference");
  check_points(rate_test, q_test, "test");
  const CurveFit f1(std::vector<double>(q_ref.begin(), q_ref.end()), log_rates(rate_ref));
  const CurveFit f2(std::vector<double>(q_test.begin(), q_test.end()), log_rates(rate_test));
  const auto [lo, hi] = overlap(f1.lo(), f1.hi(), f2.lo(), f2.hi(), "quality");
  const double avg = (f2.integral(lo, hi) - f1.integral(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

double bd_quality(std::span<const double> rate_ref, std::span<const double> q_ref,
                  std::span<const double> rate_test, std::span<const double> q_test) {
  check_points(rate_ref, q_ref, "reference");
  check_points(rate_test, q_test, "test");
  const CurveFit f1(log_rates(rate_ref), std::vector<double>(q_ref.begin(), q_ref.end()));
  const CurveFit f2(log_rates(rate_test), std::vector<double>(q_test.begin(), q_test.end()));
  const auto [lo, hi] = overlap(f1.lo(), f1.hi(), f2.lo(), f2.hi(), "log rate");
  return (f2.integral(lo, hi) - f1.integral(lo, hi)) / (hi - lo);
}

namespace {
std::pair<std::vector<double>, std::vector<double>> columns(const RDCurve& c, Quality q) {
  std::vector<double> r, v;
  for (const auto& p : c) {
    r.push_back(p.bpp.avg);
    v.push_back(q == Quality::kPsnr ? p.psnr.avg : p.ms_ssim.avg);
  }
  return {r, v};
}
}  // namespace

double bd_rate(const RDCurve& ref, const RDCurve& test, Quality q) {
  const auto [r1, q1] = columns(ref, q);
  const auto [r2, q2] = columns(test, q);
  return bd_rate(r1, q1, r2, q2);
}

double bd_quality(const RDCurve& ref, const RDCurve& test, Quality q) {
  const auto [r1, q1] = columns(ref, q);
  const auto [r2, q2] = columns(test, q);
  return bd_quality(r1, q1, r2, q2);
}

// ------------------------------------------------------------ bit allocation

Tensor<float> bit_allocation_map(const Model<float>& model, const Tensor<float>& x) {
  NoGradGuard ng;
  const auto out = model.forward(Var<float>::constant(x), Quantizer::kRound, nullptr, false);
  const Tensor<float>& p = out.p_y.value();
  const int64_t C = p.dim(1), h = p.dim(3), w = p.dim(4);
  Tensor<float> map(Shape{2, h, w});
  for (int64_t c = 0; c < C; ++c)
    for (int v = 0; v < 2; ++v)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const double q = std::max(static_cast<double>(p.at(0, c, v, i, j)), kLikelihoodBound);
          map[(v * h + i) * w + j] += static_cast<float>(-std::log2(q));
        }
  return map;
}

void save_bit_map(const Tensor<float>& map, int view, int64_t height, int64_t width, const std::string& path) {
  const int64_t h = map.dim(1), w = map.dim(2);
  float hi = 0;
  for (int64_t i = 0; i < h * w; ++i) hi = std::max(hi, map[view * h * w + i]);
  cv::Mat small(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const float v = hi > 0 ? map[(view * h + i) * w + j] / hi : 0.0f;
      small.at<uint8_t>(static_cast<int>(i), static_cast<int>(j)) = static_cast<uint8_t>(std::lround(255.0f * (1.0f - v)));
    }
  cv::Mat big;
  cv::resize(small, big, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_NEAREST);
  std::vector<uint8_t> png;
  if (!cv::imencode(".png", big, png)) throw IoError("cannot encode bit map for " + path);
  io::write_file_atomic(path, png);
}

// ------------------------------------------------------------------- report

namespace {

const std::array<cv::Scalar, 8> kColors{cv::Scalar(200, 80, 20),  cv::Scalar(30, 30, 210),  cv::Scalar(40, 150, 40),
                                        cv::Scalar(160, 40, 160), cv::Scalar(20, 140, 200), cv::Scalar(90, 90, 90),
                                        cv::Scalar(150, 150, 0),  cv::Scalar(0, 0, 0)};

void plot(const std::vector<std::pair<std::string, RDCurve>>& curves, Quality q, const std::string& path) {
  const int W = 800, H = 600, L = 90, R = 30, T = 40, B = 70;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& [name, c] : curves)
    for (const auto& p : c) {
      const double y = q == Quality::kPsnr ? p.psnr.avg : p.ms_ssim.avg;
      x0 = std::min(x0, p.bpp.avg), x1 = std::max(x1, p.bpp.avg);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const double px = 0.05 * std::max(x1 - x0, 1e-6), py = 0.05 * std::max(y1 - y0, 1e-6);
  x0 -= px, x1 += px, y0 -= py, y1 += py;
  auto to_px = [&](double x, double y) {
    return cv::Point(L + static_cast<int>((x - x0) / (x1 - x0) * (W - L - R)),
                     H - B - static_cast<int>((y - y0) / (y1 - y0) * (H - T - B)));
  };
  cv::rectangle(img, cv::Point(L, T), cv::Point(W - R, H - B), cv::Scalar(0, 0, 0), 1);
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5, yv = y0 + (y1 - y0) * i / 5;
    const cv::Point px_ = to_px(xv, y0), py_ = to_px(x0, yv);
    cv::line(img, px_, px_ + cv::Point(0, 5), cv::Scalar(0, 0, 0));
    cv::line(img, py_, py_ - cv::Point(5, 0), cv::Scalar(0, 0, 0));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", xv);
    cv::putText(img, buf, px_ + cv::Point(-18, 22), cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
    std::snprintf(buf, sizeof buf, q == Quality::kPsnr ? "%.2f" : "%.4f", yv);
    cv::putText(img, buf, py_ + cv::Point(-80, 5), cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
  }
  cv::putText(img, "bpp (average over views)", cv::Point(W / 2 - 110, H - 20), cv::FONT_HERSHEY_SIMPLEX, 0.55,
              cv::Scalar(0, 0, 0));
  cv::putText(img, q == Quality::kPsnr ? "PSNR (dB)" : "MS-SSIM", cv::Point(10, 25), cv::FONT_HERSHEY_SIMPLEX, 0.55,
              cv::Scalar(0, 0, 0));
  for (size_t k = 0; k < curves.size(); ++k) {
    RDCurve c = curves[k].second;
    std::sort(c.begin(), c.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp.avg < b.bpp.avg; });
    const cv::Scalar col = kColors[k % kColors.size()];
    std::vector<cv::Point> pts;
    for (const auto& p : c) pts.push_back(to_px(p.bpp.avg, q == Quality::kPsnr ? p.psnr.avg : p.ms_ssim.avg));
    if (pts.size() > 1) cv::polylines(img, pts, false, col, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(img, p, 4, col, cv::FILLED, cv::LINE_AA);
    const cv::Point lg(L + 15, T + 22 + 22 * static_cast<int>(k));
    cv::line(img, lg, lg + cv::Point(25, 0), col, 2);
    cv::putText(img, curves[k].first, lg + cv::Point(32, 5), cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  }
  std::vector<uint8_t> png;
  if (!cv::imencode(".png", img, png)) throw IoError("cannot encode plot " + path);
  io::write_file_atomic(path, png);
}

std::string bd_cell(const std::function<double()>& f) {
  try {
    return num(f());
  } catch (const Error&) {
    return "n/a";
  }
}

}  // namespace

void emit_report(const std::vector<std::pair<std::string, RDCurve>>& curves, const std::string& reference,
                 const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw IoError("cannot create report directory " + out_dir);
  const RDCurve* ref = nullptr;
  for (const auto& [name, c] : curves)
    if (name == reference) ref = &c;
  if (!ref) throw ParameterError("reference curve '" + reference + "' is not among the report curves");
  for (const auto& [name, c] : curves)
    if (name.find_first_of(",\n") != std::string::npos) throw ParameterError("method name '" + name + "' contains a comma");

  plot(curves, Quality::kPsnr, out_dir + "/rd_psnr.png");
  plot(curves, Quality::kMsSsim, out_dir + "/rd_msssim.png");

  std::string csv = std::string("method,") + kCsvHeader + "\n";
  for (const auto& [name, c] : curves)
    for (const auto& p : c) csv += name + "," + row(p) + "\n";
  io::write_text_atomic(out_dir + "/rd_points.csv", csv);

  std::string bd = "method,reference,bd_rate_psnr_percent,bd_psnr_db,bd_rate_msssim_percent,bd_msssim\n";
  for (const auto& [name, c] : curves) {
    bd += name + "," + reference + "," + bd_cell([&] { return bd_rate(*ref, c, Quality::kPsnr); }) + "," +
          bd_cell([&] { return bd_quality(*ref, c, Quality::kPsnr); }) + "," +
          bd_cell([&] { return bd_rate(*ref, c, Quality::kMsSsim); }) + "," +
          bd_cell([&] { return bd_quality(*ref, c, Quality::kMsSsim); }) + "\n";
  }
  io::write_text_atomic(out_dir + "/bd_table.csv", bd);
  io::write_text_atomic(out_dir + "/notes.txt",
                        "BPP counts every byte of the .bsic file: both views' y and z substreams plus the fixed\n"
                        "header and length fields, the latter split evenly between the views. The average BPP is\n"
                        "total bits / (2 * H * W). Negative BD-rate and positive BD-PSNR mean the method beats\n"
                        "the reference (" + reference + ").\n");
}

template Var<float> ms_ssim(const Var<float>&, const Var<float>&);
template Var<double> ms_ssim(const Var<double>&, const Var<double>&);

}  // namespace bisic::eval
