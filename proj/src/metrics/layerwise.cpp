#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "layerlens/error.h"
#include "layerlens/metrics.h"

namespace layerlens {

namespace {

struct Cell {
  std::size_t model, layer, set, input;
};

CellResult run_cell(const ModelEntry& entry, const std::string& layer, const InputSet& set, std::size_t input,
                    const SidConfig& cfg, const ReportOptions& options) {
  CellResult r;
  r.model = entry.id;
  r.layer = layer;
  r.input_set = set.id;
  r.input_index = input;
  try {
    const Tensor& x = set.inputs[input];
    r.sid = estimate_sid(entry.model, layer, x, cfg);
    if (options.decoder_for) r.ru = estimate_ru(entry.model, options.decoder_for(entry, layer), x, cfg);
    if (!set.masks.empty()) r.concentration = concentration(r.sid.H_i, set.masks[input]);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

}  // namespace

LayerwiseReport layerwise_report(std::span<const ModelEntry> models, std::span<const std::string> layers,
                                 std::span<const InputSet> inputs, const SidConfig& cfg,
                                 const ReportOptions& options) {
  cfg.validate();
  for (const auto& set : inputs) {
    if (!set.masks.empty() && set.masks.size() != set.inputs.size()) {
      throw ConfigError("input set '" + set.id + "' has " + std::to_string(set.masks.size()) + " masks for " +
                        std::to_string(set.inputs.size()) + " inputs");
    }
  }

  std::vector<Cell> cells;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t l = 0; l < layers.size(); ++l)
      for (std::size_t s = 0; s < inputs.size(); ++s)
        for (std::size_t i = 0; i < inputs[s].inputs.size(); ++i) cells.push_back({m, l, s, i});

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      const Cell& c = cells[k];
      results[k] = run_cell(models[c.model], layers[c.layer], inputs[c.set], c.input, cfg, options);
      if (options.on_cell) {
        std::lock_guard lock(callback_mutex);
        options.on_cell(results[k]);
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  LayerwiseReport report;
  std::size_t k = 0;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t l = 0; l < layers.size(); ++l)
      for (std::size_t s = 0; s < inputs.size(); ++s) {
        ReportRecord rec;
        rec.model = models[m].id;
        rec.layer = layers[l];
        rec.input_set = inputs[s].id;
        double h = 0, h_hat = 0, conc = 0, eps = 0, delta = 0;
        bool conformant = true;
        for (std::size_t i = 0; i < inputs[s].inputs.size(); ++i, ++k) {
          const CellResult& r = results[k];
          if (!r.error.empty()) {
            rec.errors.push_back("input " + std::to_string(i) + ": " + r.error);
            continue;
          }
          ++rec.count;
          h += r.sid.H_total;
          eps += r.sid.epsilon_achieved;
          delta += r.sid.delta_f_sq;
          conc += r.concentration;
          conformant = conformant && r.sid.conformant;
          if (r.ru) {
            h_hat += r.ru->H_hat_total;
            conformant = conformant && r.ru->conformant;
          }
        }
        if (rec.count > 0) {
          const double n = static_cast<double>(rec.count);
          rec.H_total = h / n;
          rec.epsilon = eps / n;
          rec.delta_f_sq = delta / n;
          if (options.decoder_for) rec.H_hat_total = h_hat / n;
          if (!inputs[s].masks.empty()) rec.concentration = conc / n;
          rec.conformant = conformant && rec.errors.empty();
        }
        report.records.push_back(std::move(rec));
      }
  return report;
}

}  // namespace layerlens
