#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "dstf/dataset.hpp"
#include "dstf/model.hpp"
#include "dstf/optim.hpp"
#include "json.hpp"

namespace dstf {

struct TrainSettings {
  std::size_t steps = 500;
  std::size_t batch_size = 32;
  std::size_t seq_len = 512;
  Schedule schedule{};  // schedule.total follows `steps`
  AdamWConfig adam{};
  double grad_clip = 1.0;
  std::size_t grad_accum = 1;
  std::size_t eval_every = 0;  // 0: evaluate only before the first and after the last step
  std::size_t eval_batch_size = 16;
  std::size_t checkpoint_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainSettings from_json(const nlohmann::json& j);
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
  double tokens_per_s = 0.0;
  std::optional<double> val_loss;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<StepRecord> records;
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  std::vector<std::filesystem::path> checkpoints;  // last entry is the final checkpoint
};

struct TrainHooks {
  // Runs after the optimizer update of `step` with the batch that produced it.
  std::function<void(std::size_t step, const DualStreamModel<float>& model, const Batch& batch)> after_step;
  std::function<void(const StepRecord& record)> on_record;
};

// Writes metrics.jsonl (header {"config": run_meta} then one line per step) and
// checkpoints step_NNNNNN.dstf every checkpoint_every steps plus final.dstf into
// `out_dir`. An empty `out_dir` keeps everything in memory.
TrainResult train_loop(DualStreamModel<float>& model, const Dataset& train, const Dataset& val,
                       const TrainSettings& settings, const std::filesystem::path& out_dir,
                       const nlohmann::json& run_meta = nlohmann::json::object(), const TrainHooks& hooks = {});

}  // namespace dstf
