#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "layerlens/dataset.h"
#include "layerlens/model.h"
#include "layerlens/ru.h"
#include "layerlens/sid.h"
#include "layerlens/train.h"

namespace layerlens::cli {

enum class ExitCode : int { success = 0, failure = 1, nonconformant = 2, config = 3, io = 4 };

struct DatasetConfig {
  std::string format;  ///< cifar10, lltn or synthetic
  std::filesystem::path path;
  std::filesystem::path labels;  ///< lltn only
  std::size_t limit = 0;         ///< cifar10 only; 0 reads every record
  std::string kind = "shapes";   ///< synthetic: shapes or blobs
  std::size_t count = 200;
  std::size_t size = 8;
  double separation = 4.0;
  std::optional<std::uint64_t> seed;  ///< synthetic; defaults to the run seed
};

struct ModelConfig {
  std::string id;  ///< report label; defaults to the architecture or checkpoint name
  std::string architecture;
  std::filesystem::path checkpoint;
  std::size_t classes = 0;  ///< 0 takes the dataset's class count
  std::size_t channels = 16;
  std::size_t blocks = 3;
  std::size_t hidden = 32;
};

struct DecoderConfig {
  DecoderKind kind = DecoderKind::automatic;
  TrainConfig train;
  std::size_t samples = 0;  ///< training pairs drawn from the dataset; 0 uses all
};

struct MaskConfig {
  std::string source = "boxes";  ///< boxes (from the dataset) or file
  std::filesystem::path path;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  std::vector<ModelConfig> models;  ///< report: several models side by side
  SidConfig estimator;
  std::vector<std::string> layers;  ///< empty means every layer
  std::filesystem::path outputs = "layerlens_out";
  std::uint64_t seed = 0;
  std::vector<std::size_t> inputs{0};
  std::size_t jobs = 1;
  TrainConfig train;
  DecoderConfig decoder;
  std::optional<MaskConfig> mask;
  std::vector<std::filesystem::path> entropy_maps;  ///< concentration over precomputed H_i files
  std::vector<std::string> coherency_layers;
  std::string coherency_feature_layer;
  std::size_t damage_n = 8;
  std::vector<std::size_t> damage_positions{1, 2};
  bool damage_train = true;
  std::vector<std::filesystem::path> sweep_checkpoints;
  bool report_ru = false;
};

/// Scalar overrides from the command line; they win over the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> jobs;
};

/// Seed precedence: flag, then the file, then LAYERLENS_SEED, then 0.
/// Unknown keys and malformed values throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const Overrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});
nlohmann::json to_json(const RunConfig& cfg);

Dataset load_dataset(const RunConfig& cfg);
/// Builds or loads the model and checks it against the dataset's input shape.
ModelGraph load_model(const ModelConfig& model, const Dataset& data, std::uint64_t seed);
std::string model_id(const ModelConfig& model);

int cmd_train(const RunConfig& cfg);
int cmd_sid(const RunConfig& cfg);
int cmd_ru(const RunConfig& cfg);
int cmd_concentration(const RunConfig& cfg);
int cmd_coherency(const RunConfig& cfg);
int cmd_damage(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

/// Full command line: `layerlens <verb> --config FILE [--seed N] [--alpha A] [--out DIR] [--jobs J]`.
int run(int argc, char** argv);

}  // namespace layerlens::cli
