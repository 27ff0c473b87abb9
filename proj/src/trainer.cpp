#include "dstf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dstf/checkpoint.hpp"
#include "dstf/diag.hpp"
#include "dstf/errors.hpp"
#include "dstf/ops.hpp"

namespace dstf {

void TrainSettings::validate() const {
  if (steps == 0) throw ConfigError("train.steps must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (seq_len == 0) throw ConfigError("train.seq_len must be >= 1");
  if (grad_accum == 0) throw ConfigError("train.grad_accum must be >= 1");
  if (eval_batch_size == 0) throw ConfigError("train.eval_batch_size must be >= 1");
  if (!(schedule.base_lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (schedule.floor_lr < 0.0 || schedule.floor_lr > schedule.base_lr) {
    throw ConfigError("train.lr_floor must lie in [0, train.lr]");
  }
  if (adam.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0");
}

nlohmann::json TrainSettings::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"seq_len", seq_len},
          {"lr", schedule.base_lr},
          {"lr_floor", schedule.floor_lr},
          {"warmup", schedule.warmup},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"weight_decay", adam.weight_decay},
          {"grad_clip", grad_clip},
          {"grad_accum", grad_accum},
          {"eval_every", eval_every},
          {"eval_batch_size", eval_batch_size},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

TrainSettings TrainSettings::from_json(const nlohmann::json& j) {
  TrainSettings s;
  s.steps = j.value("steps", s.steps);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.seq_len = j.value("seq_len", s.seq_len);
  s.schedule.base_lr = j.value("lr", s.schedule.base_lr);
  s.schedule.floor_lr = j.value("lr_floor", s.schedule.floor_lr);
  s.schedule.warmup = j.value("warmup", s.schedule.warmup);
  s.adam.beta1 = j.value("beta1", s.adam.beta1);
  s.adam.beta2 = j.value("beta2", s.adam.beta2);
  s.adam.eps = j.value("eps", s.adam.eps);
  s.adam.weight_decay = j.value("weight_decay", s.adam.weight_decay);
  s.grad_clip = j.value("grad_clip", s.grad_clip);
  s.grad_accum = j.value("grad_accum", s.grad_accum);
  s.eval_every = j.value("eval_every", s.eval_every);
  s.eval_batch_size = j.value("eval_batch_size", s.eval_batch_size);
  s.checkpoint_every = j.value("checkpoint_every", s.checkpoint_every);
  s.seed = j.value("seed", s.seed);
  s.schedule.total = s.steps;
  return s;
}

nlohmann::json StepRecord::to_json() const {
  nlohmann::json j = {{"step", step}, {"loss", loss}, {"lr", lr}, {"grad_norm", grad_norm}, {"tokens_per_s", tokens_per_s}};
  if (val_loss) j["val_loss"] = *val_loss;
  return j;
}

TrainResult train_loop(DualStreamModel<float>& model, const Dataset& train, const Dataset& val,
                       const TrainSettings& settings, const std::filesystem::path& out_dir,
                       const nlohmann::json& run_meta, const TrainHooks& hooks) {
  settings.validate();
  if (train.seq_len() != settings.seq_len) throw ConfigError("train: dataset sequence length differs from train.seq_len");
  if (settings.seq_len > model.config().max_seq_len) {
    throw ConfigError("train.seq_len " + std::to_string(settings.seq_len) + " exceeds model.max_seq_len " +
                      std::to_string(model.config().max_seq_len));
  }
  Schedule schedule = settings.schedule;
  schedule.total = settings.steps;

  std::ofstream metrics;
  const bool persist = !out_dir.empty();
  if (persist) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("train: cannot create output directory " + out_dir.string() + ": " + ec.message());
    const auto path = out_dir / "metrics.jsonl";
    metrics.open(path, std::ios::trunc);
    if (!metrics) throw DataError("train: cannot open " + path.string());
    metrics << nlohmann::json{{"config", run_meta}}.dump() << '\n';
  }
  auto save = [&](const std::filesystem::path& path, std::size_t step) {
    nlohmann::json extra = run_meta.is_object() ? run_meta : nlohmann::json::object();
    extra["train"] = settings.to_json();
    extra["step"] = step;
    save_checkpoint(path, model, extra);
    metrics.flush();
  };

  auto params = model.parameters();
  AdamW<float> opt(params, settings.adam);
  BatchIterator batches(train, settings.batch_size, settings.seed);
  TrainResult result;
  result.initial_val_loss = eval_loss(model, val, 1.0, std::nullopt, settings.eval_batch_size);

  for (std::size_t step = 1; step <= settings.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    model.zero_grad();
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    Batch batch;
    for (std::size_t micro = 0; micro < settings.grad_accum; ++micro) {
      batch = batches.next();
      auto loss = model.loss(batch.inputs, batch.targets);
      if (settings.grad_accum > 1) loss = scale(loss, 1.0f / static_cast<float>(settings.grad_accum));
      loss_sum += static_cast<double>(loss.item());
      backward(loss);
      tokens += batch.inputs.numel();
    }
    if (!std::isfinite(loss_sum)) throw ComputationError("train: loss diverged at step " + std::to_string(step));
    StepRecord rec;
    rec.step = step;
    rec.loss = loss_sum;
    rec.lr = lr_at(schedule, step);
    rec.grad_norm = global_grad_norm(params);
    clip_global_norm(params, settings.grad_clip);
    opt.step(rec.lr);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.tokens_per_s = secs > 0.0 ? static_cast<double>(tokens) / secs : 0.0;
    if (hooks.after_step) hooks.after_step(step, model, batch);

    const bool last = step == settings.steps;
    if (last || (settings.eval_every && step % settings.eval_every == 0)) {
      rec.val_loss = eval_loss(model, val, 1.0, std::nullopt, settings.eval_batch_size);
    }
    if (persist) metrics << rec.to_json().dump() << '\n';
    result.records.push_back(rec);
    if (hooks.on_record) hooks.on_record(rec);

    if (persist) {
      if (last) {
        result.checkpoints.push_back(out_dir / "final.dstf");
        save(result.checkpoints.back(), step);
      } else if (settings.checkpoint_every && step % settings.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%06zu.dstf", step);
        result.checkpoints.push_back(out_dir / name);
        save(result.checkpoints.back(), step);
      }
    }
  }
  result.final_val_loss = *result.records.back().val_loss;
  if (persist) {
    metrics.flush();
    if (!metrics) throw DataError("train: writing " + (out_dir / "metrics.jsonl").string() + " failed");
  }
  return result;
}

}  // namespace dstf
