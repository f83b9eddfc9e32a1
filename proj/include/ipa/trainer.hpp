#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "ipa/autodiff.hpp"
#include "ipa/checkpoint.hpp"
#include "ipa/config.hpp"
#include "ipa/corpus.hpp"
#include "ipa/language_model.hpp"
#include "ipa/metrics.hpp"
#include "ipa/optimizer.hpp"

namespace ipa {

// Mean next-token cross-entropy of V x m logits (max-shifted log-sum-exp).
double cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);

// Mean cross-entropy over all B*m positions of a batch, with gradient tracking.
ad::Var batch_loss(const LanguageModel& model, const Batch& batch);

// Mean loss over non-overlapping windows of length m (final partial window
// dropped). max_windows = 0 uses every window; threads = 0 reads IPA_THREADS
// (default 1). The result does not depend on the thread count.
// Throws ContractError if the stream holds no full window.
double evaluate(const LanguageModel& model, std::span<const std::int32_t> stream, std::size_t m,
                std::size_t batch_size, std::size_t max_windows = 0, unsigned threads = 0);

// Autoregressive sampling; temperature 0 is greedy (lowest id wins ties).
// The context is cropped to the model's last m_max tokens as it grows.
// Throws ContractError for an empty prompt or one of length >= m_max.
std::vector<std::int32_t> generate(const LanguageModel& model, std::span<const std::int32_t> prompt,
                                   std::size_t max_new, double temperature, std::uint64_t seed);

// Worker count from IPA_THREADS (at least 1).
unsigned configured_threads();

struct TrainState {
  std::size_t step = 0;
  AdamState adam;
  double best_test_loss = std::numeric_limits<double>::infinity();
};

struct TrainOptions {
  std::filesystem::path metrics_path;          // empty: no file
  bool append_metrics = false;
  std::filesystem::path checkpoint_path;       // written on test-loss improvement
  std::filesystem::path last_checkpoint_path;  // written at the end and before a divergence abort
  json checkpoint_extra;                       // echoed into checkpoint headers
  std::function<void(const MetricsRecord&)> on_record;
};

// Trains from `state` (fresh or restored) until state.step == cfg.max_steps.
// A fresh run first logs a "test" record at step 0. Every eval_interval steps
// and at the last step it logs a "train" record (mean batch loss over the
// interval, median step time after 5 warmup steps) and a "test" record; with
// target_train_loss set also a "train_eval" record over the whole train
// split, and training stops early once that drops below the target.
// Throws NumericError on a non-finite loss after writing the last checkpoint.
std::vector<MetricsRecord> train(LanguageModel& model, const TokenStreams& streams,
                                 const TrainConfig& cfg, const TrainOptions& options,
                                 TrainState& state);

// Checkpoint of the complete training state.
CheckpointRecord capture_training(const LanguageModel& model, const TrainState& state, json extra);
TrainState restore_training(const CheckpointRecord& record, LanguageModel& model);

// Median wall-clock milliseconds of `steps` full optimizer steps after
// `warmup` untimed ones. Updates the model's parameters.
double measure_step_time(LanguageModel& model, const BatchSampler& sampler, const TrainConfig& cfg,
                         std::size_t warmup = 5, std::size_t steps = 20);

}  // namespace ipa
