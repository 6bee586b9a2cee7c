#include <cmath>

#include "layerlens/error.h"
#include "layerlens/metrics.h"
#include "layerlens/surgery.h"

namespace layerlens {

CoherencyReport coherency_check(const ModelGraph& model, std::string_view layer, const Tensor& x,
                                const SidConfig& cfg, std::string_view feature_layer) {
  CoherencyReport report;
  report.layer = std::string(layer);
  report.partner = rescale_partner(model, layer);
  report.feature_layer = std::string(feature_layer.empty() ? layer : feature_layer);
  report.normalized = cfg.normalize;

  const ModelGraph rescaled = rescale_pair(model, layer);
  report.output_max_diff = max_abs_diff(forward(rescaled, x), forward(model, x));

  report.original = estimate_sid(model, report.feature_layer, x, cfg);
  report.rescaled = estimate_sid(rescaled, report.feature_layer, x, cfg);
  for (std::size_t i = 0; i < report.original.H_i.size(); ++i) {
    report.max_delta_H = std::max(report.max_delta_H, std::abs(report.original.H_i[i] - report.rescaled.H_i[i]));
  }
  report.pass = report.output_max_diff <= 1e-10 && report.max_delta_H <= report.tolerance;
  return report;
}

}  // namespace layerlens
