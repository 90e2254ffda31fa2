#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sggan/data_synth.hpp"
#include "sggan/losses.hpp"
#include "sggan/networks.hpp"

namespace sggan {

/// Raised by TrainConfig::validate; the message lists every violation.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::vector<std::string>& problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class DiscriminatorMode { semantic, patchgan };

struct TrainConfig {
  float lambda_c = 10.0f;
  float lambda_g = 5.0f;
  // (alpha, beta) for epochs 1..schedule_switch_epoch, then the late pair.
  float alpha_early = 1.0f;
  float beta_early = 0.0f;
  float alpha_late = 0.9f;
  float beta_late = 0.1f;
  int schedule_switch_epoch = 3;
  float learning_rate = 0.0002f;
  float adam_beta1 = 0.5f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  int batch_size = 1;
  int epochs = 10;
  int image_height = 64;
  int image_width = 128;
  int num_classes = 4;
  int history_capacity = 50;
  std::uint64_t seed = 0;
  int gen_depth = 4;
  int gen_base_width = 32;
  int disc_blocks = 4;
  int disc_base_width = 64;
  DiscriminatorMode disc_mode = DiscriminatorMode::semantic;
  int checkpoint_every = 0;  // steps; 0 = only at the end
  std::string checkpoint_dir;
  std::string metrics_path;
  long max_steps = 0;  // stop after this global step (0 = run all epochs)

  /// Throws ConfigError listing every violated constraint.
  void validate() const;
  /// (alpha, beta) in force during 1-based epoch `epoch`.
  SoftnessParams softness_for_epoch(int epoch) const;
  /// Sets one field from its textual value; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Flat "key = value" text, one field per line.
  std::string to_text() const;
};

/// Parses flat key-value text ('#' starts a comment). Unknown keys and
/// malformed lines are rejected; the result is not validated.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config_file(const std::string& path, TrainConfig base = {});

// ---- history buffer -----------------------------------------------------

struct HistoryItem {
  Tensor image;  // (1, 3, H, W)
  Tensor mask;   // (1, s, h_k, w_k)
};

/// Pool of earlier generator outputs replayed to the discriminators. Once
/// full, each push returns a random stored item (and stores the new one in
/// its place) with probability 1/2, else returns the new item.
class HistoryBuffer {
 public:
  HistoryBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), seed_(seed) {}

  HistoryItem push_sample(HistoryItem item);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<HistoryItem>& items() const { return items_; }
  std::uint64_t seed() const { return seed_; }
  /// Number of random draws consumed so far; the RNG state.
  std::uint64_t draws() const { return draws_; }

  /// Result of draw number `counter` for a buffer seeded with `seed`:
  /// whether to swap, and which slot.
  struct Draw {
    bool swap;
    std::size_t slot;
  };
  static Draw draw(std::uint64_t seed, std::uint64_t counter, std::size_t size);

  /// Restores contents and RNG position (checkpoint loading).
  void restore(std::vector<HistoryItem> items, std::uint64_t draws);

 private:
  std::size_t capacity_;
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::vector<HistoryItem> items_;
};

// ---- optimizer ----------------------------------------------------------

struct AdamConfig {
  float lr = 0.0002f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First and second moments per parameter plus the step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;

  static AdamState zeros_like(const ParameterSet& params);
};

/// Bias-corrected adaptive-moment update of every parameter. A non-finite
/// gradient throws NumericError naming the parameter; nothing is updated.
void adam_update(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& state,
                 const AdamConfig& cfg);

// ---- training -----------------------------------------------------------

struct TrainState {
  GeneratorNet g_v2r;
  GeneratorNet g_r2v;
  SemanticDiscriminatorNet d_v;
  SemanticDiscriminatorNet d_r;
  AdamState adam_g_v2r;
  AdamState adam_g_r2v;
  AdamState adam_d_v;
  AdamState adam_d_r;
  HistoryBuffer history_v;  // adapted R->V images for SD_V
  HistoryBuffer history_r;  // adapted V->R images for SD_R
  long step = 0;            // completed steps
  int epoch = 1;            // 1-based epoch of the next step
  std::uint64_t seed = 0;
};

/// Fresh networks, zero moments and empty history, all seeded from cfg.seed.
TrainState init_state(const TrainConfig& cfg);

/// Generator-side terms at the current parameters, without updating anything.
LossReport evaluate_generator_objective(const TrainState& st, const ScenePair& v, const ScenePair& r,
                                        const TrainConfig& cfg, const SoftnessParams& p);

/// Generator half-step: forward both generators, backpropagate the full
/// objective and update both generators. Returns the generator-side report
/// and the detached adapted images (V->R, R->V).
struct GeneratorStepResult {
  LossReport report;
  Tensor fake_r;
  Tensor fake_v;
};
GeneratorStepResult update_generators(TrainState& st, const ScenePair& v, const ScenePair& r,
                                      const TrainConfig& cfg, const SoftnessParams& p);

/// Discriminator half-step on real images vs history-sampled fakes. The
/// adapted V->R images are masked with the virtual labels and vice versa.
/// Returns (adv_d_r, adv_d_v).
std::pair<double, double> update_discriminators(TrainState& st, const ScenePair& v, const ScenePair& r,
                                                const Tensor& fake_r, const Tensor& fake_v,
                                                const TrainConfig& cfg);

/// One full step: generators first, then history, then discriminators.
/// `v` and `r` may hold a batch (N, ...). Throws NumericError on a
/// non-finite loss.
LossReport train_step(TrainState& st, const ScenePair& v, const ScenePair& r, const TrainConfig& cfg);

struct MetricRow {
  long step = 0;  // 1-based global step
  int epoch = 0;
  float alpha = 0.0f;
  float beta = 0.0f;
  LossReport losses;

  static std::string csv_header();
  std::string csv_row() const;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricRow> log;
};

/// Epoch loop. An epoch is one pass over the smaller corpus; both corpora
/// are reshuffled per epoch from (seed, epoch). Resumes from `resume` when
/// given. Writes metric rows and checkpoints when the paths are set.
TrainResult run_training(const TrainConfig& cfg, const std::vector<ScenePair>& virtual_corpus,
                         const std::vector<ScenePair>& real_corpus,
                         std::optional<TrainState> resume = std::nullopt,
                         const std::function<void(const MetricRow&)>& on_step = {});

/// Per-epoch pairing order: a permutation of [0, n) derived from (seed, epoch, stream).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch, int stream);

/// Steps in one epoch.
long steps_per_epoch(const TrainConfig& cfg, std::size_t n_virtual, std::size_t n_real);

// ---- checkpoints --------------------------------------------------------

std::vector<Record> state_to_records(const TrainState& st);
TrainState state_from_records(const std::vector<Record>& records);
void checkpoint_save(const std::string& path, const TrainState& st);
TrainState checkpoint_load(const std::string& path);

/// Order-sensitive FNV-1a hash over parameter names and bytes.
std::uint64_t parameter_hash(const ParameterSet& params);

}  // namespace sggan
