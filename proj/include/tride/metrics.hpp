#pragma once

#include <cstddef>
#include <string>

#include "tride/tensor.hpp"

namespace tride {

// Depth metric suite over pixels with 0 < gt <= cap. All NaN when no pixel
// qualifies (n_pixels == 0).
struct Metrics {
  std::size_t n_pixels = 0;
  double mae = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double absrel = std::numeric_limits<double>::quiet_NaN();
  double log10 = std::numeric_limits<double>::quiet_NaN();
  double rmselog = std::numeric_limits<double>::quiet_NaN();
  double d1 = std::numeric_limits<double>::quiet_NaN();
  double d2 = std::numeric_limits<double>::quiet_NaN();
  double d3 = std::numeric_limits<double>::quiet_NaN();
};

// Pixel-weighted accumulation across samples: adding maps one by one and
// finalizing equals computing over the pooled pixels.
class MetricsAccum {
 public:
  void add(const Tensor<float>& pred, const Tensor<float>& gt, double cap);
  Metrics finalize() const;

 private:
  std::size_t n_ = 0;
  double sum_abs_ = 0, sum_sq_ = 0, sum_absrel_ = 0;
  double sum_dlog_ = 0, sum_dlog_sq_ = 0;
  double cnt_d1_ = 0, cnt_d2_ = 0, cnt_d3_ = 0;
};

Metrics compute_metrics(const Tensor<float>& pred, const Tensor<float>& gt, double cap);

// CSV line "subset,cap,n_pixels,mae,rmse,absrel,log10,rmselog,d1,d2,d3".
std::string metrics_csv_row(const std::string& subset, double cap, const Metrics& m);
extern const char* kMetricsCsvHeader;

}  // namespace tride
