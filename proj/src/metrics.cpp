#include "tride/metrics.hpp"

#include <cmath>
#include <sstream>

#include "tride/errors.hpp"

namespace tride {

const char* kMetricsCsvHeader = "subset,cap_m,n_pixels,mae,rmse,absrel,log10,rmselog,d1,d2,d3";

void MetricsAccum::add(const Tensor<float>& pred, const Tensor<float>& gt, double cap) {
  if (pred.shape != gt.shape) {
    throw DimError("metrics shape mismatch: " + shape_str(pred.shape) + " vs " +
                   shape_str(gt.shape));
  }
  if (cap <= 0.0) throw ContractError("metrics cap must be positive");
  constexpr double kLogFloor = 1e-3;  // guards log metrics against bad file inputs
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    const double d = gt.data[i];
    if (!(d > 0.0) || d > cap) continue;
    const double p = pred.data[i];
    const double err = p - d;
    ++n_;
    sum_abs_ += std::abs(err);
    sum_sq_ += err * err;
    sum_absrel_ += std::abs(err) / d;
    const double dlog = std::log10(std::max(p, kLogFloor)) - std::log10(d);
    sum_dlog_ += std::abs(dlog);
    sum_dlog_sq_ += dlog * dlog;
    const double ratio = std::max(p / d, d / p);
    cnt_d1_ += ratio < t1;
    cnt_d2_ += ratio < t2;
    cnt_d3_ += ratio < t3;
  }
}

Metrics MetricsAccum::finalize() const {
  Metrics m;
  m.n_pixels = n_;
  if (n_ == 0) return m;
  const double n = static_cast<double>(n_);
  m.mae = sum_abs_ / n;
  m.rmse = std::sqrt(sum_sq_ / n);
  m.absrel = sum_absrel_ / n;
  m.log10 = sum_dlog_ / n;
  m.rmselog = std::sqrt(sum_dlog_sq_ / n);
  m.d1 = cnt_d1_ / n;
  m.d2 = cnt_d2_ / n;
  m.d3 = cnt_d3_ / n;
  return m;
}

Metrics compute_metrics(const Tensor<float>& pred, const Tensor<float>& gt, double cap) {
  MetricsAccum acc;
  acc.add(pred, gt, cap);
  return acc.finalize();
}

std::string metrics_csv_row(const std::string& subset, double cap, const Metrics& m) {
  std::ostringstream os;
  os << subset << ',';
  // caps are integral in practice; print without a trailing ".0"
  if (cap == std::floor(cap)) {
    os << static_cast<long long>(cap);
  } else {
    os << cap;
  }
  os << ',' << m.n_pixels;
  const double vals[] = {m.mae, m.rmse, m.absrel, m.log10, m.rmselog, m.d1, m.d2, m.d3};
  os.precision(6);
  os << std::fixed;
  for (double v : vals) {
    if (std::isnan(v)) {
      os << ",nan";
    } else {
      os << ',' << v;
    }
  }
  return os.str();
}

}  // namespace tride
