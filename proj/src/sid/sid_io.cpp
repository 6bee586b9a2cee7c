#include "layerlens/sid_io.h"

#include <set>
#include <string>

#include "layerlens/error.h"
#include "layerlens/lltn.h"

namespace layerlens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
  return stem.parent_path() / (stem.filename().string() + suffix);
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("estimator.") + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const SidConfig& cfg) {
  return {{"alpha", cfg.alpha},
          {"tau", cfg.tau},
          {"samples_per_step", cfg.samples_per_step},
          {"max_steps", cfg.max_steps},
          {"max_rounds", cfg.max_rounds},
          {"sigma_lr", cfg.sigma_lr},
          {"lambda_init", cfg.lambda_init},
          {"lambda_tolerance", cfg.lambda_tolerance},
          {"sigma_cap", cfg.sigma_cap},
          {"baseline_samples", cfg.baseline_samples},
          {"eval_samples", cfg.eval_samples},
          {"normalize", cfg.normalize},
          {"seed", cfg.seed}};
}

SidConfig sid_config_from_json(const json& j, SidConfig base) {
  if (!j.is_object()) throw ConfigError("estimator section must be an object");
  static const std::set<std::string> known{"alpha",       "tau",         "samples_per_step", "max_steps",
                                           "max_rounds",  "sigma_lr",    "lambda_init",      "lambda_tolerance",
                                           "sigma_cap",   "baseline_samples", "eval_samples", "normalize",
                                           "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown estimator key '" + key + "'");
  }
  read_field(j, "alpha", base.alpha);
  read_field(j, "tau", base.tau);
  read_field(j, "samples_per_step", base.samples_per_step);
  read_field(j, "max_steps", base.max_steps);
  read_field(j, "max_rounds", base.max_rounds);
  read_field(j, "sigma_lr", base.sigma_lr);
  read_field(j, "lambda_init", base.lambda_init);
  read_field(j, "lambda_tolerance", base.lambda_tolerance);
  read_field(j, "sigma_cap", base.sigma_cap);
  read_field(j, "baseline_samples", base.baseline_samples);
  read_field(j, "eval_samples", base.eval_samples);
  read_field(j, "normalize", base.normalize);
  read_field(j, "seed", base.seed);
  base.validate();
  return base;
}

json to_json(const SidResult& r) {
  return {{"H_total", r.H_total},
          {"units", r.H_i.size()},
          {"shape", r.H_i.shape()},
          {"epsilon_achieved", r.epsilon_achieved},
          {"epsilon_target", r.epsilon_target},
          {"delta_f_sq", r.delta_f_sq},
          {"lambda_final", r.lambda_final},
          {"steps_used", r.steps_used},
          {"rounds_used", r.rounds_used},
          {"capped_units", r.capped_units},
          {"conformant", r.conformant},
          {"seed", r.seed}};
}

void write_sid_result(const SidResult& r, const fs::path& stem) {
  write_lltn(with_suffix(stem, ".H_i.lltn"), r.H_i);
  write_lltn(with_suffix(stem, ".log_sigma.lltn"), r.log_sigma);
  write_file_atomic(with_suffix(stem, ".json"), to_json(r).dump(2) + "\n");
}

SidResult read_sid_result(const fs::path& stem) {
  const std::vector<char> bytes = read_file_bytes(with_suffix(stem, ".json"));
  SidResult r;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    r.H_total = j.at("H_total").get<double>();
    r.epsilon_achieved = j.at("epsilon_achieved").get<double>();
    r.epsilon_target = j.at("epsilon_target").get<double>();
    r.delta_f_sq = j.at("delta_f_sq").get<double>();
    r.lambda_final = j.at("lambda_final").get<double>();
    r.steps_used = j.at("steps_used").get<std::size_t>();
    r.rounds_used = j.at("rounds_used").get<std::size_t>();
    r.capped_units = j.at("capped_units").get<std::vector<std::size_t>>();
    r.conformant = j.at("conformant").get<bool>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError("malformed SID result " + with_suffix(stem, ".json").string() + ": " + e.what());
  }
  r.H_i = read_lltn(with_suffix(stem, ".H_i.lltn"));
  r.log_sigma = read_lltn(with_suffix(stem, ".log_sigma.lltn"));
  return r;
}

}  // namespace layerlens
