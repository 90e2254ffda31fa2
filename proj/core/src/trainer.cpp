#include "sggan/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "sggan/ops.hpp"

namespace sggan {

// ---- config -------------------------------------------------------------

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid training configuration:";
  for (const std::string& p : problems) msg += "\n  - " + p;
  return msg;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError({"'" + key + "': cannot parse '" + value + "'"});
  }
  return out;
}

std::string format_float(float v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

ConfigError::ConfigError(const std::vector<std::string>& problems)
    : std::invalid_argument(join_problems(problems)), problems_(problems) {}

void TrainConfig::validate() const {
  std::vector<std::string> p;
  if (!(lambda_c >= 0.0f)) p.push_back("lambda_c must be >= 0");
  if (!(lambda_g >= 0.0f)) p.push_back("lambda_g must be >= 0");
  for (auto [name, a, b] : {std::tuple{"early", alpha_early, beta_early},
                            std::tuple{"late", alpha_late, beta_late}}) {
    try {
      SoftnessParams{a, b}.validate();
    } catch (const std::invalid_argument& e) {
      p.push_back(std::string(name) + " (alpha, beta): " + e.what());
    }
  }
  if (schedule_switch_epoch < 0) p.push_back("schedule_switch_epoch must be >= 0");
  if (!(learning_rate > 0.0f)) p.push_back("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0f && adam_beta1 < 1.0f)) p.push_back("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0f && adam_beta2 < 1.0f)) p.push_back("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0f)) p.push_back("adam_eps must be > 0");
  if (batch_size < 1) p.push_back("batch_size must be >= 1");
  if (epochs < 0) p.push_back("epochs must be >= 0");
  if (gen_depth < 2) p.push_back("gen_depth must be >= 2");
  if (gen_base_width < 1) p.push_back("gen_base_width must be >= 1");
  if (disc_blocks < 0) p.push_back("disc_blocks must be >= 0");
  if (disc_base_width < 1) p.push_back("disc_base_width must be >= 1");
  if (num_classes < 1) p.push_back("num_classes must be >= 1");
  if (history_capacity < 0) p.push_back("history_capacity must be >= 0");
  if (checkpoint_every < 0) p.push_back("checkpoint_every must be >= 0");
  if (max_steps < 0) p.push_back("max_steps must be >= 0");
  if (image_height < 1 || image_width < 1) {
    p.push_back("image_height and image_width must be >= 1");
  } else if (gen_depth >= 2 && gen_depth < 30) {
    const int m = 1 << gen_depth;
    if (image_height % m != 0 || image_width % m != 0) {
      p.push_back("image_height and image_width must be divisible by 2^gen_depth = " + std::to_string(m));
    }
  }
  if (!p.empty()) throw ConfigError(p);
}

SoftnessParams TrainConfig::softness_for_epoch(int epoch) const {
  return epoch <= schedule_switch_epoch ? SoftnessParams{alpha_early, beta_early}
                                        : SoftnessParams{alpha_late, beta_late};
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::map<std::string, float*> floats = {
      {"lambda_c", &lambda_c},       {"lambda_g", &lambda_g},     {"alpha_early", &alpha_early},
      {"beta_early", &beta_early},   {"alpha_late", &alpha_late}, {"beta_late", &beta_late},
      {"learning_rate", &learning_rate}, {"adam_beta1", &adam_beta1}, {"adam_beta2", &adam_beta2},
      {"adam_eps", &adam_eps}};
  const std::map<std::string, int*> ints = {
      {"schedule_switch_epoch", &schedule_switch_epoch}, {"batch_size", &batch_size},
      {"epochs", &epochs},                               {"image_height", &image_height},
      {"image_width", &image_width},                     {"num_classes", &num_classes},
      {"history_capacity", &history_capacity},           {"gen_depth", &gen_depth},
      {"gen_base_width", &gen_base_width},               {"disc_blocks", &disc_blocks},
      {"disc_base_width", &disc_base_width},             {"checkpoint_every", &checkpoint_every}};
  if (auto it = floats.find(key); it != floats.end()) {
    *it->second = parse_number<float>(key, value);
  } else if (auto jt = ints.find(key); jt != ints.end()) {
    *jt->second = parse_number<int>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "max_steps") {
    max_steps = parse_number<long>(key, value);
  } else if (key == "disc_mode") {
    if (value == "semantic") {
      disc_mode = DiscriminatorMode::semantic;
    } else if (value == "patchgan") {
      disc_mode = DiscriminatorMode::patchgan;
    } else {
      throw ConfigError({"'disc_mode' must be semantic or patchgan, got '" + value + "'"});
    }
  } else if (key == "checkpoint_dir") {
    checkpoint_dir = value;
  } else if (key == "metrics_path") {
    metrics_path = value;
  } else {
    throw ConfigError({"unknown configuration key '" + key + "'"});
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lambda_c = " << format_float(lambda_c) << '\n'
     << "lambda_g = " << format_float(lambda_g) << '\n'
     << "alpha_early = " << format_float(alpha_early) << '\n'
     << "beta_early = " << format_float(beta_early) << '\n'
     << "alpha_late = " << format_float(alpha_late) << '\n'
     << "beta_late = " << format_float(beta_late) << '\n'
     << "schedule_switch_epoch = " << schedule_switch_epoch << '\n'
     << "learning_rate = " << format_float(learning_rate) << '\n'
     << "adam_beta1 = " << format_float(adam_beta1) << '\n'
     << "adam_beta2 = " << format_float(adam_beta2) << '\n'
     << "adam_eps = " << format_float(adam_eps) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "epochs = " << epochs << '\n'
     << "image_height = " << image_height << '\n'
     << "image_width = " << image_width << '\n'
     << "num_classes = " << num_classes << '\n'
     << "history_capacity = " << history_capacity << '\n'
     << "seed = " << seed << '\n'
     << "gen_depth = " << gen_depth << '\n'
     << "gen_base_width = " << gen_base_width << '\n'
     << "disc_blocks = " << disc_blocks << '\n'
     << "disc_base_width = " << disc_base_width << '\n'
     << "disc_mode = " << (disc_mode == DiscriminatorMode::semantic ? "semantic" : "patchgan") << '\n'
     << "checkpoint_every = " << checkpoint_every << '\n'
     << "max_steps = " << max_steps << '\n';
  if (!checkpoint_dir.empty()) os << "checkpoint_dir = " << checkpoint_dir << '\n';
  if (!metrics_path.empty()) os << "metrics_path = " << metrics_path << '\n';
  return os.str();
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> problems;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      for (const std::string& p : e.problems()) problems.push_back("line " + std::to_string(line_no) + ": " + p);
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

// ---- history buffer -----------------------------------------------------

HistoryBuffer::Draw HistoryBuffer::draw(std::uint64_t seed, std::uint64_t counter, std::size_t size) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
  std::mt19937_64 rng(seq);
  const bool swap = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  const std::size_t slot = std::uniform_int_distribution<std::size_t>(0, size - 1)(rng);
  return {swap, slot};
}

HistoryItem HistoryBuffer::push_sample(HistoryItem item) {
  if (capacity_ == 0) return item;
  if (items_.size() < capacity_) {
    items_.push_back(item);
    return item;
  }
  const Draw d = draw(seed_, draws_++, items_.size());
  if (!d.swap) return item;
  HistoryItem old = std::move(items_[d.slot]);
  items_[d.slot] = std::move(item);
  return old;
}

void HistoryBuffer::restore(std::vector<HistoryItem> items, std::uint64_t draws) {
  if (items.size() > capacity_) throw std::runtime_error("history buffer restore exceeds capacity");
  items_ = std::move(items);
  draws_ = draws;
}

// ---- Adam ---------------------------------------------------------------

AdamState AdamState::zeros_like(const ParameterSet& params) {
  AdamState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.value.shape());
    s.v.emplace_back(e.value.shape());
  }
  return s;
}

void adam_update(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_update: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape()) {
      throw ShapeError("adam_update: gradient shape mismatch for " + params[i].name);
    }
    for (std::size_t j = 0; j < grads[i].numel(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NumericError("adam_update: non-finite gradient " + std::to_string(grads[i][j]) + " in " +
                           params[i].name + " at element " + std::to_string(j) + " (optimizer step " +
                           std::to_string(state.step + 1) + ")");
      }
    }
  }
  const long t = ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p[j] = static_cast<float>(p[j] - cfg.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps));
    }
  }
}

// ---- state --------------------------------------------------------------

namespace {

// splitmix64 finaliser, used to derive independent sub-seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) { return mix(mix(seed) ^ mix(stream + 1)); }

int disc_classes(const TrainConfig& cfg) {
  return cfg.disc_mode == DiscriminatorMode::semantic ? cfg.num_classes : 1;
}

AdamConfig adam_config(const TrainConfig& cfg) {
  return AdamConfig{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

std::vector<Tensor> gradients(const Graph& g, const BoundParams& p) {
  std::vector<Tensor> out;
  out.reserve(p.vars.size());
  for (const Var& v : p.vars) out.push_back(g.grad(v));
  return out;
}

// Patch scores of a discriminator: masked per-class sum, or the raw trunk.
Var score(const SemanticDiscriminatorNet& d, const BoundParams& p, Var image, const Tensor& mask) {
  if (d.num_classes() == 1 && mask.numel() == 0) return patchgan_forward(d, p, image);
  return sd_forward(d, p, image, mask);
}

// Mask for the discriminator; empty tensor in patchgan mode.
Tensor disc_mask(const SemanticDiscriminatorNet& d, const LabelMap& labels, const TrainConfig& cfg) {
  if (cfg.disc_mode == DiscriminatorMode::patchgan) return Tensor{};
  auto [hk, wk] = discriminator_receptive_dims(d, labels.height(), labels.width());
  return one_hot_mask(labels, d.num_classes(), hk, wk);
}

void require_finite(double value, const char* what, long step) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("non-finite ") + what + " loss (" + std::to_string(value) + ") at step " +
                       std::to_string(step + 1));
  }
}

struct GeneratorGraph {
  Var total;
  Var adv_v2r, adv_r2v, cycle, grad;
  Var fake_r, fake_v;
  BoundParams p_v2r, p_r2v;
};

GeneratorGraph build_generator_graph(Graph& g, const TrainState& st, const ScenePair& v, const ScenePair& r,
                                     const TrainConfig& cfg, const SoftnessParams& p, bool trainable) {
  GeneratorGraph out;
  out.p_v2r = bind(g, st.g_v2r.params(), trainable);
  out.p_r2v = bind(g, st.g_r2v.params(), trainable);
  const BoundParams pd_v = bind(g, st.d_v.params(), false);
  const BoundParams pd_r = bind(g, st.d_r.params(), false);
  Var vi = g.constant(v.image);
  Var ri = g.constant(r.image);
  out.fake_r = st.g_v2r.forward(out.p_v2r, vi);
  Var cyc_v = st.g_r2v.forward(out.p_r2v, out.fake_r);
  out.fake_v = st.g_r2v.forward(out.p_r2v, ri);
  Var cyc_r = st.g_v2r.forward(out.p_v2r, out.fake_v);
  // Adapted images keep their source semantics.
  out.adv_v2r = generator_adv_loss_ls(score(st.d_r, pd_r, out.fake_r, disc_mask(st.d_r, v.labels, cfg)));
  out.adv_r2v = generator_adv_loss_ls(score(st.d_v, pd_v, out.fake_v, disc_mask(st.d_v, r.labels, cfg)));
  out.cycle = cycle_loss(vi, cyc_v, ri, cyc_r);
  out.grad = full_grad_objective(vi, out.fake_r, v.labels, ri, out.fake_v, r.labels, p);
  out.total = total_objective(out.adv_v2r, out.adv_r2v, out.cycle, out.grad,
                              LossWeights{cfg.lambda_c, cfg.lambda_g});
  return out;
}

LossReport report_of(const GeneratorGraph& gg, const TrainConfig& cfg) {
  ObjectiveParts parts{gg.adv_v2r.value().item(), gg.adv_r2v.value().item(), gg.cycle.value().item(),
                       gg.grad.value().item()};
  return total_objective(parts, LossWeights{cfg.lambda_c, cfg.lambda_g});
}

}  // namespace

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  const GeneratorConfig gc{cfg.gen_depth, cfg.gen_base_width, 0};
  const DiscriminatorConfig dc{cfg.disc_blocks, cfg.disc_base_width, disc_classes(cfg), 0};
  auto gen = [&](std::uint64_t stream) {
    GeneratorConfig c = gc;
    c.seed = sub_seed(cfg.seed, stream);
    return GeneratorNet(c);
  };
  auto disc = [&](std::uint64_t stream) {
    DiscriminatorConfig c = dc;
    c.seed = sub_seed(cfg.seed, stream);
    return SemanticDiscriminatorNet(c);
  };
  TrainState st{gen(1),
                gen(2),
                disc(3),
                disc(4),
                {},
                {},
                {},
                {},
                HistoryBuffer(static_cast<std::size_t>(cfg.history_capacity), sub_seed(cfg.seed, 5)),
                HistoryBuffer(static_cast<std::size_t>(cfg.history_capacity), sub_seed(cfg.seed, 6)),
                0,
                1,
                cfg.seed};
  st.adam_g_v2r = AdamState::zeros_like(st.g_v2r.params());
  st.adam_g_r2v = AdamState::zeros_like(st.g_r2v.params());
  st.adam_d_v = AdamState::zeros_like(st.d_v.params());
  st.adam_d_r = AdamState::zeros_like(st.d_r.params());
  return st;
}

LossReport evaluate_generator_objective(const TrainState& st, const ScenePair& v, const ScenePair& r,
                                        const TrainConfig& cfg, const SoftnessParams& p) {
  Graph g;
  return report_of(build_generator_graph(g, st, v, r, cfg, p, false), cfg);
}

GeneratorStepResult update_generators(TrainState& st, const ScenePair& v, const ScenePair& r,
                                      const TrainConfig& cfg, const SoftnessParams& p) {
  Graph g;
  GeneratorGraph gg = build_generator_graph(g, st, v, r, cfg, p, true);
  GeneratorStepResult out{report_of(gg, cfg), gg.fake_r.value(), gg.fake_v.value()};
  require_finite(out.report.total, "generator", st.step);
  g.backward(gg.total);
  const AdamConfig ac = adam_config(cfg);
  adam_update(st.g_v2r.params(), gradients(g, gg.p_v2r), st.adam_g_v2r, ac);
  adam_update(st.g_r2v.params(), gradients(g, gg.p_r2v), st.adam_g_r2v, ac);
  return out;
}

std::pair<double, double> update_discriminators(TrainState& st, const ScenePair& v, const ScenePair& r,
                                                const Tensor& fake_r, const Tensor& fake_v,
                                                const TrainConfig& cfg) {
  const Tensor fake_r_mask = disc_mask(st.d_r, v.labels, cfg);
  const Tensor fake_v_mask = disc_mask(st.d_v, r.labels, cfg);
  auto replay = [](HistoryBuffer& buf, const Tensor& images, const Tensor& masks) {
    std::vector<Tensor> out_images, out_masks;
    for (std::size_t i = 0; i < images.shape().n; ++i) {
      HistoryItem item{batch_item(images, i), masks.numel() ? batch_item(masks, i) : Tensor{}};
      HistoryItem got = buf.push_sample(std::move(item));
      out_images.push_back(std::move(got.image));
      out_masks.push_back(std::move(got.mask));
    }
    Tensor mask_batch = masks.numel() ? stack_batch(out_masks) : Tensor{};
    return std::pair{stack_batch(out_images), std::move(mask_batch)};
  };
  auto [hist_r, hist_r_mask] = replay(st.history_r, fake_r, fake_r_mask);
  auto [hist_v, hist_v_mask] = replay(st.history_v, fake_v, fake_v_mask);

  Graph g;
  const BoundParams pd_r = bind(g, st.d_r.params(), true);
  const BoundParams pd_v = bind(g, st.d_v.params(), true);
  Var adv_d_r = discriminator_loss_ls(score(st.d_r, pd_r, g.constant(r.image), disc_mask(st.d_r, r.labels, cfg)),
                                      score(st.d_r, pd_r, g.constant(hist_r), hist_r_mask));
  Var adv_d_v = discriminator_loss_ls(score(st.d_v, pd_v, g.constant(v.image), disc_mask(st.d_v, v.labels, cfg)),
                                      score(st.d_v, pd_v, g.constant(hist_v), hist_v_mask));
  const double d_r = adv_d_r.value().item();
  const double d_v = adv_d_v.value().item();
  require_finite(d_r + d_v, "discriminator", st.step);
  g.backward(ops::add(adv_d_r, adv_d_v));
  const AdamConfig ac = adam_config(cfg);
  adam_update(st.d_r.params(), gradients(g, pd_r), st.adam_d_r, ac);
  adam_update(st.d_v.params(), gradients(g, pd_v), st.adam_d_v, ac);
  return {d_r, d_v};
}

LossReport train_step(TrainState& st, const ScenePair& v, const ScenePair& r, const TrainConfig& cfg) {
  const SoftnessParams p = cfg.softness_for_epoch(st.epoch);
  GeneratorStepResult gen = update_generators(st, v, r, cfg, p);
  auto [d_r, d_v] = update_discriminators(st, v, r, gen.fake_r, gen.fake_v, cfg);
  LossReport report = gen.report;
  report.adv_d_r = d_r;
  report.adv_d_v = d_v;
  return report;
}

// ---- epoch loop ---------------------------------------------------------

std::string MetricRow::csv_header() { return LossReport::csv_header() + ",epoch,alpha,beta"; }

std::string MetricRow::csv_row() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, ",%d,%.9g,%.9g", epoch, static_cast<double>(alpha), static_cast<double>(beta));
  return losses.csv_row(step) + buf;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch, int stream) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(sub_seed(seed, 1000 + static_cast<std::uint64_t>(epoch) * 2 + static_cast<std::uint64_t>(stream)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

long steps_per_epoch(const TrainConfig& cfg, std::size_t n_virtual, std::size_t n_real) {
  return static_cast<long>(std::min(n_virtual, n_real) / static_cast<std::size_t>(cfg.batch_size));
}

namespace {

ScenePair gather(const std::vector<ScenePair>& corpus, const std::vector<std::size_t>& perm, long pos,
                 int batch) {
  if (batch == 1) return corpus[perm[static_cast<std::size_t>(pos)]];
  std::vector<Tensor> images;
  std::vector<LabelMap> labels;
  for (int b = 0; b < batch; ++b) {
    const ScenePair& s = corpus[perm[static_cast<std::size_t>(pos * batch + b)]];
    images.push_back(s.image);
    labels.push_back(s.labels);
  }
  return ScenePair{stack_batch(images), stack_labels(labels)};
}

void check_corpus(const std::vector<ScenePair>& corpus, const TrainConfig& cfg, const char* name) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Shape& s = corpus[i].image.shape();
    if (s.n != 1 || s.c != 3 || s.h != static_cast<std::size_t>(cfg.image_height) ||
        s.w != static_cast<std::size_t>(cfg.image_width)) {
      throw std::invalid_argument(std::string(name) + " sample " + std::to_string(i) + " has shape " + s.str() +
                                  ", expected (1, 3, " + std::to_string(cfg.image_height) + ", " +
                                  std::to_string(cfg.image_width) + ")");
    }
    if (corpus[i].labels.num_classes() != cfg.num_classes) {
      throw std::invalid_argument(std::string(name) + " sample " + std::to_string(i) + " has " +
                                  std::to_string(corpus[i].labels.num_classes()) + " classes, config says " +
                                  std::to_string(cfg.num_classes));
    }
  }
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const std::vector<ScenePair>& virtual_corpus,
                         const std::vector<ScenePair>& real_corpus, std::optional<TrainState> resume,
                         const std::function<void(const MetricRow&)>& on_step) {
  cfg.validate();
  TrainResult result{resume ? std::move(*resume) : init_state(cfg), {}};
  TrainState& st = result.state;
  const long total_steps = cfg.epochs == 0 ? 0 : cfg.epochs * steps_per_epoch(cfg, virtual_corpus.size(), real_corpus.size());
  if (cfg.epochs > 0) {
    check_corpus(virtual_corpus, cfg, "virtual corpus");
    check_corpus(real_corpus, cfg, "real corpus");
    if (steps_per_epoch(cfg, virtual_corpus.size(), real_corpus.size()) < 1) {
      throw std::invalid_argument("corpora hold fewer samples than one batch");
    }
  }
  const long last_step = cfg.max_steps > 0 ? std::min(total_steps, cfg.max_steps) : total_steps;

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    const bool append = resume.has_value() || st.step > 0;
    metrics.open(cfg.metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open metrics file " + cfg.metrics_path);
    if (!append) metrics << MetricRow::csv_header() << '\n';
  }
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  auto save = [&](const std::string& name) {
    const std::string path = (std::filesystem::path(cfg.checkpoint_dir) / name).string();
    checkpoint_save(path, st);
  };

  const long spe = total_steps > 0 ? steps_per_epoch(cfg, virtual_corpus.size(), real_corpus.size()) : 1;
  int perm_epoch = -1;
  std::vector<std::size_t> perm_v, perm_r;
  while (st.step < last_step) {
    const int epoch0 = static_cast<int>(st.step / spe);
    st.epoch = epoch0 + 1;
    if (epoch0 != perm_epoch) {
      perm_v = epoch_permutation(virtual_corpus.size(), st.seed, epoch0, 0);
      perm_r = epoch_permutation(real_corpus.size(), st.seed, epoch0, 1);
      perm_epoch = epoch0;
    }
    const long pos = st.step % spe;
    const ScenePair v = gather(virtual_corpus, perm_v, pos, cfg.batch_size);
    const ScenePair r = gather(real_corpus, perm_r, pos, cfg.batch_size);
    const SoftnessParams p = cfg.softness_for_epoch(st.epoch);
    MetricRow row{st.step + 1, st.epoch, p.alpha, p.beta, train_step(st, v, r, cfg)};
    ++st.step;
    st.epoch = static_cast<int>(st.step / spe) + 1;
    if (metrics.is_open()) {
      metrics << row.csv_row() << '\n';
      metrics.flush();
    }
    if (on_step) on_step(row);
    result.log.push_back(row);
    if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%07ld.sggn", st.step);
      save(name);
      save("latest.sggn");
    }
  }
  if (!cfg.checkpoint_dir.empty()) save("latest.sggn");
  return result;
}

// ---- checkpoints --------------------------------------------------------

namespace {

// Integers are stored as 16-bit chunks so every value is exact in float32.
void put_u64(std::vector<float>& out, std::uint64_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<float>((v >> (16 * i)) & 0xFFFFu));
}

std::uint64_t get_u64(const Tensor& t, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const float f = t.at(0, 0, 0, pos++);
    if (!(f >= 0.0f && f <= 65535.0f) || f != std::floor(f)) throw std::runtime_error("corrupt manifest record");
    v |= static_cast<std::uint64_t>(f) << (16 * i);
  }
  return v;
}

void append_adam(std::vector<Record>& out, const std::string& prefix, const ParameterSet& params,
                 const AdamState& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(Record{"adam_m/" + prefix + params[i].name, s.m[i]});
    out.push_back(Record{"adam_v/" + prefix + params[i].name, s.v[i]});
  }
}

void append_history(std::vector<Record>& out, const std::string& prefix, const HistoryBuffer& h) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    out.push_back(Record{prefix + std::to_string(i) + "/image", h.items()[i].image});
    out.push_back(Record{prefix + std::to_string(i) + "/mask", h.items()[i].mask});
  }
}

const Record& find_record(const std::map<std::string, const Record*, std::less<>>& by_name, const std::string& name) {
  auto it = by_name.find(name);
  if (it == by_name.end()) throw std::runtime_error("checkpoint lacks record " + name);
  return *it->second;
}

}  // namespace

std::vector<Record> state_to_records(const TrainState& st) {
  std::vector<float> manifest;
  put_u64(manifest, static_cast<std::uint64_t>(st.step));
  put_u64(manifest, static_cast<std::uint64_t>(st.epoch));
  put_u64(manifest, st.seed);
  for (const AdamState* a : {&st.adam_g_v2r, &st.adam_g_r2v, &st.adam_d_v, &st.adam_d_r}) {
    put_u64(manifest, static_cast<std::uint64_t>(a->step));
  }
  for (const HistoryBuffer* h : {&st.history_v, &st.history_r}) {
    put_u64(manifest, h->capacity());
    put_u64(manifest, h->seed());
    put_u64(manifest, h->draws());
    put_u64(manifest, h->size());
  }
  const std::size_t manifest_len = manifest.size();

  std::vector<Record> out;
  out.push_back(Record{"manifest", Tensor({1, 1, 1, manifest_len}, std::move(manifest))});
  out.push_back(generator_meta_record(st.g_v2r.config()));
  const DiscriminatorConfig& dc = st.d_v.config();
  out.push_back(Record{"meta/discriminator",
                       Tensor({1, 1, 1, 3}, {static_cast<float>(dc.num_blocks), static_cast<float>(dc.base_width),
                                             static_cast<float>(dc.num_classes)})});
  append_records(out, "g_v2r/", st.g_v2r.params());
  append_records(out, "g_r2v/", st.g_r2v.params());
  append_records(out, "d_v/", st.d_v.params());
  append_records(out, "d_r/", st.d_r.params());
  append_adam(out, "g_v2r/", st.g_v2r.params(), st.adam_g_v2r);
  append_adam(out, "g_r2v/", st.g_r2v.params(), st.adam_g_r2v);
  append_adam(out, "d_v/", st.d_v.params(), st.adam_d_v);
  append_adam(out, "d_r/", st.d_r.params(), st.adam_d_r);
  append_history(out, "history_v/", st.history_v);
  append_history(out, "history_r/", st.history_r);
  return out;
}

TrainState state_from_records(const std::vector<Record>& records) {
  std::map<std::string, const Record*, std::less<>> by_name;
  for (const Record& r : records) by_name.emplace(r.name, &r);
  const Tensor& manifest = find_record(by_name, "manifest").tensor;
  if (manifest.numel() != 4 * (3 + 4 + 8)) throw std::runtime_error("checkpoint manifest has unexpected length");
  const Tensor& dmeta = find_record(by_name, "meta/discriminator").tensor;
  if (dmeta.numel() != 3) throw std::runtime_error("checkpoint meta/discriminator is malformed");

  std::size_t pos = 0;
  const auto step = static_cast<long>(get_u64(manifest, pos));
  const auto epoch = static_cast<int>(get_u64(manifest, pos));
  const std::uint64_t seed = get_u64(manifest, pos);
  long adam_steps[4];
  for (long& s : adam_steps) s = static_cast<long>(get_u64(manifest, pos));

  GeneratorPair gens = generators_from_records(records);
  DiscriminatorConfig dc{static_cast<int>(dmeta[0]), static_cast<int>(dmeta[1]), static_cast<int>(dmeta[2]), 0};
  SemanticDiscriminatorNet d_v(dc), d_r(dc);
  assign_from_records(records, "d_v/", d_v.params());
  assign_from_records(records, "d_r/", d_r.params());

  auto load_adam = [&](const std::string& prefix, const ParameterSet& params, long steps) {
    AdamState s;
    for (const auto& e : params.entries()) {
      s.m.push_back(find_record(by_name, "adam_m/" + prefix + e.name).tensor);
      s.v.push_back(find_record(by_name, "adam_v/" + prefix + e.name).tensor);
      if (s.m.back().shape() != e.value.shape() || s.v.back().shape() != e.value.shape()) {
        throw std::runtime_error("checkpoint moment shape mismatch for " + prefix + e.name);
      }
    }
    s.step = steps;
    return s;
  };
  auto load_history = [&](const std::string& prefix) {
    const std::uint64_t capacity = get_u64(manifest, pos);
    const std::uint64_t hseed = get_u64(manifest, pos);
    const std::uint64_t draws = get_u64(manifest, pos);
    const std::uint64_t size = get_u64(manifest, pos);
    HistoryBuffer h(capacity, hseed);
    std::vector<HistoryItem> items;
    for (std::uint64_t i = 0; i < size; ++i) {
      items.push_back(HistoryItem{find_record(by_name, prefix + std::to_string(i) + "/image").tensor,
                                  find_record(by_name, prefix + std::to_string(i) + "/mask").tensor});
    }
    h.restore(std::move(items), draws);
    return h;
  };

  TrainState st{std::move(gens.v2r), std::move(gens.r2v), std::move(d_v), std::move(d_r),
                {}, {}, {}, {},
                HistoryBuffer(0, 0), HistoryBuffer(0, 0), step, epoch, seed};
  st.adam_g_v2r = load_adam("g_v2r/", st.g_v2r.params(), adam_steps[0]);
  st.adam_g_r2v = load_adam("g_r2v/", st.g_r2v.params(), adam_steps[1]);
  st.adam_d_v = load_adam("d_v/", st.d_v.params(), adam_steps[2]);
  st.adam_d_r = load_adam("d_r/", st.d_r.params(), adam_steps[3]);
  st.history_v = load_history("history_v/");
  st.history_r = load_history("history_r/");
  return st;
}

void checkpoint_save(const std::string& path, const TrainState& st) {
  // Write-then-rename so a crash never leaves a half-written checkpoint under `path`.
  const std::string tmp = path + ".tmp";
  save_container(tmp, state_to_records(st));
  std::filesystem::rename(tmp, path);
}

TrainState checkpoint_load(const std::string& path) {
  try {
    return state_from_records(load_container(path));
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw std::runtime_error(path + ": " + msg);
  }
}

std::uint64_t parameter_hash(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& e : params.entries()) {
    feed(e.name.data(), e.name.size());
    feed(e.value.data().data(), e.value.numel() * sizeof(float));
  }
  return h;
}

}  // namespace sggan
