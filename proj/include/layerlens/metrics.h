#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layerlens/dataset.h"
#include "layerlens/model.h"
#include "layerlens/ru.h"
#include "layerlens/sid.h"

namespace layerlens {

/// Foreground segment over input spatial positions; true = inside.
class Mask {
 public:
  Mask(std::size_t height, std::size_t width, std::vector<bool> inside);
  static Mask from_box(std::size_t height, std::size_t width, const BoundingBox& box);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool inside(std::size_t row, std::size_t col) const { return inside_[row * width_ + col]; }
  bool inside(std::size_t index) const { return inside_[index]; }
  std::size_t inside_count() const;
  Mask complement() const;

 private:
  std::size_t height_, width_;
  std::vector<bool> inside_;
};

/// PGM (P5, value > 127 is inside) or bounding-box JSON {"x","y","w","h"}
/// rasterized to height x width. Chosen by extension (.json or anything else).
Mask read_mask(const std::filesystem::path& path, std::size_t height, std::size_t width);
void write_mask_pgm(const Mask& mask, const std::filesystem::path& path);

/// [C,H,W] -> channel mean [H,W]; [H,W] unchanged; [n] -> [1,n].
Tensor spatial_map(const Tensor& h);

/// Mean entropy outside the mask minus mean entropy inside.
double concentration(const Tensor& h, const Mask& mask);

struct CoherencyReport {
  std::string layer;
  std::string partner;
  std::string feature_layer;
  double output_max_diff = 0.0;
  double max_delta_H = 0.0;
  double tolerance = 1e-6;
  bool normalized = true;
  bool pass = false;
  SidResult original;
  SidResult rescaled;
};

/// Rescales (layer, partner) by 4 and reruns estimate_sid on `feature_layer`
/// (default: `layer`) with the same seed.
CoherencyReport coherency_check(const ModelGraph& model, std::string_view layer, const Tensor& x,
                                const SidConfig& cfg, std::string_view feature_layer = {});

struct ReportRecord {
  std::string model;
  std::string layer;
  std::string input_set;
  double H_total = std::numeric_limits<double>::quiet_NaN();
  double H_hat_total = std::numeric_limits<double>::quiet_NaN();
  double concentration = std::numeric_limits<double>::quiet_NaN();
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  double delta_f_sq = std::numeric_limits<double>::quiet_NaN();
  bool conformant = false;
  std::size_t count = 0;            ///< inputs that completed
  std::vector<std::string> errors;  ///< per-input failures
};

struct LayerwiseReport {
  std::vector<ReportRecord> records;
};

struct ModelEntry {
  std::string id;
  ModelGraph model;
};

struct InputSet {
  std::string id;
  std::vector<Tensor> inputs;
  std::vector<Mask> masks;  ///< empty, or one per input
};

/// Per-cell results, for callers that also want the raw estimates.
struct CellResult {
  std::string model, layer, input_set;
  std::size_t input_index = 0;
  SidResult sid;
  std::optional<RuResult> ru;
  double concentration = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct ReportOptions {
  std::size_t jobs = 1;
  /// When set, RU is estimated as well with the decoder it returns.
  std::function<DecoderSpec(const ModelEntry&, const std::string& layer)> decoder_for;
  /// Called once per finished cell, from worker threads, in no fixed order.
  std::function<void(const CellResult&)> on_cell;
};

/// Every (model, layer, input set) triple, aggregated by the mean over the
/// set's inputs. Failures are recorded per cell and never abort the grid.
LayerwiseReport layerwise_report(std::span<const ModelEntry> models, std::span<const std::string> layers,
                                 std::span<const InputSet> inputs, const SidConfig& cfg,
                                 const ReportOptions& options = {});

struct HeatmapBounds {
  double min = 0.0;
  double max = 0.0;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// 8-bit P5 image of spatial_map(h), min-max scaled (constant maps are 128),
/// plus <path>.json holding the bounds.
HeatmapBounds export_heatmap(const Tensor& h, const std::filesystem::path& path);
/// Reconstructs the spatial map from a heatmap and its sidecar.
Tensor read_heatmap(const std::filesystem::path& path);

inline constexpr std::string_view kReportHeader =
    "model,layer,input_set,H_total,H_hat_total,concentration,epsilon,delta_f_sq,conformant";
void export_csv(const LayerwiseReport& report, const std::filesystem::path& path);
std::string to_csv(const LayerwiseReport& report);
LayerwiseReport read_csv(const std::filesystem::path& path);
LayerwiseReport parse_csv(std::string_view text);

}  // namespace layerlens
