#include "ipa/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "ipa/checkpoint.hpp"
#include "ipa/errors.hpp"
#include "ipa/random.hpp"

namespace ipa {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

// Sum (not mean) of the per-column losses of `logits` columns [begin, end).
double column_loss_sum(const Tensor& logits, std::size_t begin, std::size_t end,
                       std::span<const std::int32_t> targets) {
  const std::size_t vocab = logits.rows();
  double total = 0.0;
  for (std::size_t j = begin; j < end; ++j) {
    const auto t = targets[j - begin];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw IndexError("target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < vocab; ++v) hi = std::max(hi, logits(v, j));
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(logits(v, j) - hi);
    total += hi + std::log(z) - logits(static_cast<std::size_t>(t), j);
  }
  return total;
}

double train_step(LanguageModel& model, const Batch& batch, const TrainConfig& cfg,
                  double learning_rate, AdamState& adam) {
  auto params = model.parameters();
  ad::zero_grad(params);
  auto loss = batch_loss(model, batch);
  const double value = loss.value().item();
  if (!std::isfinite(value)) return value;
  ad::backward(loss);
  if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
  adam_step(params, adam, AdamHyper{learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
  return value;
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  if (targets.size() != logits.cols()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.cols()) + " positions");
  }
  return column_loss_sum(logits, 0, logits.cols(), targets) / static_cast<double>(logits.cols());
}

ad::Var batch_loss(const LanguageModel& model, const Batch& batch) {
  if (batch.inputs.empty() || batch.inputs.size() != batch.targets.size()) {
    throw ContractError("batch_loss: empty or ragged batch");
  }
  // One head matmul and one loss over all B*m columns.
  std::vector<ad::Var> hidden;
  std::vector<std::int32_t> targets;
  hidden.reserve(batch.inputs.size());
  for (std::size_t b = 0; b < batch.inputs.size(); ++b) {
    if (batch.inputs[b].size() != batch.targets[b].size()) {
      throw ContractError("batch_loss: inputs and targets differ in length");
    }
    hidden.push_back(model.hidden(batch.inputs[b]));
    targets.insert(targets.end(), batch.targets[b].begin(), batch.targets[b].end());
  }
  auto h = hidden.size() == 1 ? hidden.front() : ad::concat_cols(hidden);
  return ad::cross_entropy(model.head(h), targets);
}

unsigned configured_threads() {
  if (const char* env = std::getenv("IPA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(std::min(v, 256L));
  }
  return 1;
}

double evaluate(const LanguageModel& model, std::span<const std::int32_t> stream, std::size_t m,
                std::size_t batch_size, std::size_t max_windows, unsigned threads) {
  if (m == 0 || batch_size == 0) throw ContractError("evaluate: m and batch size must be positive");
  if (stream.size() < m + 1) {
    throw ContractError("evaluate: stream of " + std::to_string(stream.size()) +
                        " tokens holds no window of length " + std::to_string(m));
  }
  std::size_t windows = (stream.size() - 1) / m;
  if (max_windows > 0) windows = std::min(windows, max_windows);
  const std::size_t batches = (windows + batch_size - 1) / batch_size;
  std::vector<double> batch_sums(batches, 0.0);

  auto run_batch = [&](std::size_t b) {
    const std::size_t first = b * batch_size;
    const std::size_t last = std::min(windows, first + batch_size);
    std::vector<ad::Var> hidden;
    for (std::size_t w = first; w < last; ++w) hidden.push_back(model.hidden(stream.subspan(w * m, m)));
    auto h = hidden.size() == 1 ? hidden.front() : ad::concat_cols(hidden);
    const Tensor logits = model.head(h).value();
    double total = 0.0;
    for (std::size_t w = first; w < last; ++w) {
      const std::size_t col = (w - first) * m;
      total += column_loss_sum(logits, col, col + m, stream.subspan(w * m + 1, m));
    }
    batch_sums[b] = total;
  };

  if (threads == 0) threads = configured_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, batches));
  if (threads <= 1) {
    ad::NoGradGuard guard;
    for (std::size_t b = 0; b < batches; ++b) run_batch(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          ad::NoGradGuard guard;  // grad mode is per thread
          for (std::size_t b = t; b < batches; b += threads) run_batch(b);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  // Fixed summation order keeps the result independent of the thread count.
  double total = 0.0;
  for (double s : batch_sums) total += s;
  return total / static_cast<double>(windows * m);
}

std::vector<std::int32_t> generate(const LanguageModel& model, std::span<const std::int32_t> prompt,
                                   std::size_t max_new, double temperature, std::uint64_t seed) {
  const std::size_t limit = model.max_length();
  if (prompt.empty()) throw ContractError("generate: empty prompt");
  if (prompt.size() >= limit) {
    throw ContractError("generate: prompt of " + std::to_string(prompt.size()) +
                        " tokens must be shorter than m_max = " + std::to_string(limit));
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw ContractError("generate: temperature must be finite and >= 0");
  }
  ad::NoGradGuard guard;
  Rng rng(seed);
  std::vector<std::int32_t> out(prompt.begin(), prompt.end());
  for (std::size_t i = 0; i < max_new; ++i) {
    const std::size_t start = out.size() > limit ? out.size() - limit : 0;
    const auto ctx = std::span<const std::int32_t>(out).subspan(start);
    const Tensor logits = model.forward(ctx).value();
    const std::size_t last = logits.cols() - 1;
    const std::size_t vocab = logits.rows();
    std::size_t pick = 0;
    if (temperature == 0.0) {
      for (std::size_t v = 1; v < vocab; ++v) {
        if (logits(v, last) > logits(pick, last)) pick = v;
      }
    } else {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < vocab; ++v) hi = std::max(hi, logits(v, last));
      std::vector<double> weights(vocab);
      double z = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) {
        weights[v] = std::exp((logits(v, last) - hi) / temperature);
        z += weights[v];
      }
      double u = rng.uniform() * z;
      pick = vocab - 1;
      for (std::size_t v = 0; v < vocab; ++v) {
        if (u < weights[v]) {
          pick = v;
          break;
        }
        u -= weights[v];
      }
    }
    out.push_back(static_cast<std::int32_t>(pick));
  }
  return out;
}

CheckpointRecord capture_training(const LanguageModel& model, const TrainState& state, json extra) {
  auto rec = capture(model, state.adam, std::move(extra));
  rec.header["step"] = state.step;
  rec.header["best_test_loss"] =
      std::isfinite(state.best_test_loss) ? json(state.best_test_loss) : json(nullptr);
  return rec;
}

TrainState restore_training(const CheckpointRecord& record, LanguageModel& model) {
  TrainState state;
  restore(record, model, &state.adam);
  state.step = record.header.value("step", state.adam.step);
  const auto best = record.header.find("best_test_loss");
  if (best != record.header.end() && best->is_number()) state.best_test_loss = best->get<double>();
  return state;
}

std::vector<MetricsRecord> train(LanguageModel& model, const TokenStreams& streams,
                                 const TrainConfig& cfg, const TrainOptions& options,
                                 TrainState& state) {
  cfg.validate();
  const std::size_t m = cfg.seq_len;
  if (m > model.max_length()) {
    throw ConfigError("train.seq_len", "seq_len " + std::to_string(m) + " exceeds the model's m_max " +
                                           std::to_string(model.max_length()));
  }
  const BatchSampler sampler(streams.train, m, cfg.batch_size, cfg.seed);
  const std::size_t params = model.parameter_count();
  const unsigned threads = configured_threads();

  MetricsWriter writer;
  if (!options.metrics_path.empty()) writer = MetricsWriter(options.metrics_path, options.append_metrics);

  std::vector<MetricsRecord> history;
  auto emit = [&](MetricsRecord r) {
    writer.write(r);
    if (options.on_record) options.on_record(r);
    history.push_back(std::move(r));
  };
  auto save = [&](const std::filesystem::path& path) {
    if (!path.empty()) write_checkpoint(path, capture_training(model, state, options.checkpoint_extra));
  };

  std::vector<double> interval_losses, interval_ms;
  // Logs one evaluation point; returns true once the train-loss target is met.
  auto evaluation = [&]() {
    const double ms = median(interval_ms);
    if (!interval_losses.empty()) {
      double mean = 0.0;
      for (double l : interval_losses) mean += l;
      mean /= static_cast<double>(interval_losses.size());
      emit({state.step, "train", mean, ms, params});
    }
    const double test = evaluate(model, streams.test, m, cfg.batch_size, cfg.eval_windows, threads);
    emit({state.step, "test", test, ms, params});
    interval_losses.clear();
    interval_ms.clear();
    bool done = false;
    if (cfg.target_train_loss > 0.0) {
      const double full = evaluate(model, streams.train, m, cfg.batch_size, 0, threads);
      emit({state.step, "train_eval", full, ms, params});
      done = full < cfg.target_train_loss;
    }
    if (test < state.best_test_loss) {
      state.best_test_loss = test;
      save(options.checkpoint_path);
    }
    return done;
  };

  bool done = false;
  if (state.step == 0) done = evaluation();
  const std::size_t warmup_until = state.step + 5;
  while (!done && state.step < cfg.max_steps) {
    const Batch batch = sampler.batch(state.step);
    const auto t0 = Clock::now();
    const double loss = train_step(model, batch, cfg, cfg.learning_rate_at(state.step), state.adam);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (!std::isfinite(loss)) {
      save(options.last_checkpoint_path);
      throw NumericError("training diverged at step " + std::to_string(state.step) +
                         ": loss is " + std::to_string(loss));
    }
    ++state.step;
    interval_losses.push_back(loss);
    if (state.step > warmup_until) interval_ms.push_back(ms);
    if (state.step % cfg.eval_interval == 0 || state.step == cfg.max_steps) done = evaluation();
  }
  save(options.last_checkpoint_path);
  return history;
}

double measure_step_time(LanguageModel& model, const BatchSampler& sampler, const TrainConfig& cfg,
                         std::size_t warmup, std::size_t steps) {
  if (steps == 0) throw ContractError("measure_step_time: need at least one timed step");
  AdamState adam;
  std::vector<double> times;
  for (std::size_t s = 0; s < warmup + steps; ++s) {
    const Batch batch = sampler.batch(s);
    const auto t0 = Clock::now();
    train_step(model, batch, cfg, cfg.learning_rate, adam);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (s >= warmup) times.push_back(ms);
  }
  return median(std::move(times));
}

}  // namespace ipa
