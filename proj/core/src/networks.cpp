#include "sggan/networks.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "sggan/ops.hpp"

namespace sggan {

// ---- ParameterSet -------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Tensor init) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(init)});
  return entries_.size() - 1;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].value;
}

Tensor& ParameterSet::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const Entry& e : entries_) total += e.value.numel();
  return total;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name ||
        !bitwise_equal(a.entries_[i].value, b.entries_[i].value)) {
      return false;
    }
  }
  return true;
}

BoundParams bind(Graph& graph, const ParameterSet& params, bool trainable) {
  BoundParams out;
  out.vars.reserve(params.size());
  for (const auto& e : params.entries()) {
    out.vars.push_back(trainable ? graph.variable(e.value) : graph.constant(e.value));
  }
  return out;
}

namespace {

constexpr float kInitStd = 0.02f;
constexpr float kLeakySlope = 0.2f;

Tensor gaussian(Shape s, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, kInitStd);
  Tensor t(s);
  for (float& v : t.vec()) v = dist(rng);
  return t;
}

Tensor channel_param(std::size_t channels, float fill) { return Tensor({1, channels, 1, 1}, fill); }

int level_width(int base, int level) { return base << std::min(level, 3); }

}  // namespace

// ---- Generator ----------------------------------------------------------

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg) : cfg_(cfg) {
  if (cfg.depth < 2) throw std::invalid_argument("generator depth must be >= 2");
  if (cfg.base_width < 1) throw std::invalid_argument("generator base_width must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  const auto u = [](int v) { return static_cast<std::size_t>(v); };

  std::size_t in_ch = 3;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::size_t w = u(width(i));
    const std::string name = "enc" + std::to_string(i + 1);
    Level level;
    level.conv = params_.add(name + ".conv.weight", gaussian({w, in_ch, 3, 3}, rng));
    level.normed = i > 0;
    if (level.normed) {
      level.scale = params_.add(name + ".norm.scale", channel_param(w, 1.0f));
      level.shift = params_.add(name + ".norm.shift", channel_param(w, 0.0f));
    }
    encoder_.push_back(level);
    in_ch = w;
  }
  // Decoder level k (1-based) upsamples to the resolution of encoder level
  // depth - k and concatenates it; level `depth` reaches full resolution and
  // concatenates the input image.
  for (int k = 1; k <= cfg.depth; ++k) {
    const int target = cfg.depth - k;  // 1-based encoder level at the output resolution, 0 = input
    const std::size_t w = u(width(std::max(target - 1, 0)));
    const std::string name = "dec" + std::to_string(k);
    Level level;
    level.conv = params_.add(name + ".up.weight", gaussian({in_ch, w, 2, 2}, rng));
    level.normed = true;
    level.scale = params_.add(name + ".norm.scale", channel_param(w, 1.0f));
    level.shift = params_.add(name + ".norm.shift", channel_param(w, 0.0f));
    decoder_.push_back(level);
    in_ch = w + (target > 0 ? w : 3);
  }
  out_conv_ = params_.add("out.conv.weight", gaussian({3, in_ch, 3, 3}, rng));
  out_bias_ = params_.add("out.conv.bias", channel_param(3, 0.0f));
}

int GeneratorNet::width(int level) const { return level_width(cfg_.base_width, level); }

Var GeneratorNet::forward(const BoundParams& p, Var image) const {
  const Shape& s = image.shape();
  if (s.c != 3) throw ShapeError("generator expects 3-channel images, got " + s.str());
  if (s.h % size_multiple() != 0 || s.w % size_multiple() != 0) {
    throw ShapeError("generator input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by 2^depth = " + std::to_string(size_multiple()));
  }
  std::vector<Var> skips;
  Var x = image;
  for (const Level& level : encoder_) {
    x = ops::conv2d(x, p[level.conv], 2, ops::Padding::zero, 1);
    if (level.normed) x = ops::instance_norm(x, p[level.scale], p[level.shift]);
    x = ops::activation(x, ops::Activation::leaky_relu(kLeakySlope));
    skips.push_back(x);
  }
  for (std::size_t k = 1; k <= decoder_.size(); ++k) {
    const Level& level = decoder_[k - 1];
    x = ops::conv_transpose2d(x, p[level.conv], 2);
    x = ops::instance_norm(x, p[level.scale], p[level.shift]);
    x = ops::activation(x, ops::Activation::relu());
    const std::size_t target = decoder_.size() - k;  // 0 means the input image
    x = ops::concat_channels(x, target > 0 ? skips[target - 1] : image);
  }
  x = ops::bias_add(ops::conv2d(x, p[out_conv_], 1, ops::Padding::zero, 1), p[out_bias_]);
  return ops::activation(x, ops::Activation::tanh());
}

GeneratorNet build_generator(const GeneratorConfig& cfg) { return GeneratorNet(cfg); }

Var generator_forward(const GeneratorNet& g, Graph& graph, Var image, bool trainable) {
  return g.forward(bind(graph, g.params(), trainable), image);
}

Tensor generator_forward(const GeneratorNet& g, const Tensor& image) {
  Graph graph;
  return generator_forward(g, graph, graph.constant(image), false).value();
}

// ---- Discriminator ------------------------------------------------------

SemanticDiscriminatorNet::SemanticDiscriminatorNet(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  if (cfg.num_blocks < 0) throw std::invalid_argument("discriminator num_blocks must be >= 0");
  if (cfg.base_width < 1) throw std::invalid_argument("discriminator base_width must be >= 1");
  if (cfg.num_classes < 1) throw std::invalid_argument("discriminator num_classes must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::size_t in_ch = 3;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const auto w = static_cast<std::size_t>(level_width(cfg.base_width, i));
    const std::string name = "block" + std::to_string(i + 1);
    Block b;
    b.conv = params_.add(name + ".conv.weight", gaussian({w, in_ch, 4, 4}, rng));
    b.normed = i > 0;
    if (b.normed) {
      b.scale = params_.add(name + ".norm.scale", channel_param(w, 1.0f));
      b.shift = params_.add(name + ".norm.shift", channel_param(w, 0.0f));
    } else {
      b.bias = params_.add(name + ".conv.bias", channel_param(w, 0.0f));
    }
    blocks_.push_back(b);
    in_ch = w;
  }
  const auto s = static_cast<std::size_t>(cfg.num_classes);
  final_conv_ = params_.add("final.conv.weight", gaussian({s, in_ch, 3, 3}, rng));
  final_bias_ = params_.add("final.conv.bias", channel_param(s, 0.0f));
}

Var SemanticDiscriminatorNet::trunk(const BoundParams& p, Var image) const {
  Var x = image;
  for (const Block& b : blocks_) {
    x = ops::conv2d(x, p[b.conv], 2, ops::Padding::zero, 1);
    x = b.normed ? ops::instance_norm(x, p[b.scale], p[b.shift]) : ops::bias_add(x, p[b.bias]);
    x = ops::activation(x, ops::Activation::leaky_relu(kLeakySlope));
  }
  return ops::bias_add(ops::conv2d(x, p[final_conv_], 1, ops::Padding::zero, 1), p[final_bias_]);
}

SemanticDiscriminatorNet build_discriminator(const DiscriminatorConfig& cfg) {
  return SemanticDiscriminatorNet(cfg);
}

std::pair<std::size_t, std::size_t> discriminator_receptive_dims(const SemanticDiscriminatorNet& d,
                                                                 std::size_t input_h,
                                                                 std::size_t input_w) {
  std::size_t h = input_h, w = input_w;
  for (int i = 0; i < d.config().num_blocks; ++i) {
    h = (h + 2 - 4) / 2 + 1;
    w = (w + 2 - 4) / 2 + 1;
  }
  return {h, w};
}

Tensor one_hot_mask(const LabelMap& labels, int num_classes, std::size_t target_h,
                    std::size_t target_w) {
  if (num_classes < 1) throw std::invalid_argument("one_hot_mask: num_classes must be >= 1");
  const auto s = static_cast<std::size_t>(num_classes);
  const std::size_t hw = labels.height() * labels.width();
  Tensor hot({labels.batch(), s, labels.height(), labels.width()});
  for (std::size_t n = 0; n < labels.batch(); ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::int32_t c = labels.values()[n * hw + i];
      if (c < 0 || c >= num_classes) {
        throw std::out_of_range("one_hot_mask: label " + std::to_string(c) + " outside [0, " +
                                std::to_string(num_classes) + ")");
      }
      hot[(n * s + static_cast<std::size_t>(c)) * hw + i] = 1.0f;
    }
  }
  return resize_nearest(hot, target_h, target_w);
}

Var sd_forward(const SemanticDiscriminatorNet& d, const BoundParams& p, Var image, const Tensor& mask) {
  Var t = d.trunk(p, image);
  if (mask.shape() != t.shape()) {
    throw ShapeError("sd_forward: mask shape " + mask.shape().str() + " does not match trunk output " +
                     t.shape().str());
  }
  return ops::channel_sum(ops::mul(t, image.graph->constant(mask)));
}

Var patchgan_forward(const SemanticDiscriminatorNet& d, const BoundParams& p, Var image) {
  if (d.num_classes() != 1) throw std::invalid_argument("patchgan_forward needs num_classes == 1");
  return d.trunk(p, image);
}

// ---- container ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'G', 'G', 'N'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  const std::string& bytes() const { return bytes_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len)));
}

}  // namespace

void write_container(std::ostream& out, const std::vector<Record>& records) {
  std::string buf(kMagic, 4);
  put_u32(buf, kContainerVersion);
  put_u32(buf, static_cast<std::uint32_t>(records.size()));
  for (const Record& r : records) {
    put_u32(buf, static_cast<std::uint32_t>(r.name.size()));
    buf += r.name;
    const Shape& s = r.tensor.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : r.tensor.vec()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(buf, bits);
    }
  }
  put_u32(buf, crc_of(buf, buf.size()));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

std::vector<Record> read_container(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  if (r.size() < 16 || r.str(4) != std::string(kMagic, 4)) {
    throw std::runtime_error("not a checkpoint container (bad magic or too short)");
  }
  const std::uint32_t stored_crc = [&] {
    Reader tail(r.bytes().substr(r.size() - 4));
    return tail.u32();
  }();
  if (stored_crc != crc_of(r.bytes(), r.size() - 4)) {
    throw std::runtime_error("checkpoint corrupted or truncated (checksum mismatch)");
  }
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw std::runtime_error("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(kContainerVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  std::vector<Record> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.name = r.str(r.u32());
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    if (s.numel() > (r.size() - r.pos()) / 4) throw std::runtime_error("checkpoint truncated");
    std::vector<float> data(s.numel());
    for (float& v : data) {
      const std::uint32_t bits = r.u32();
      std::memcpy(&v, &bits, 4);
    }
    rec.tensor = Tensor(s, std::move(data));
    records.push_back(std::move(rec));
  }
  if (r.pos() != r.size() - 4) throw std::runtime_error("checkpoint has trailing bytes");
  return records;
}

void save_container(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  write_container(out, records);
}

std::vector<Record> load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  try {
    return read_container(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void append_records(std::vector<Record>& out, const std::string& prefix, const ParameterSet& params) {
  for (const auto& e : params.entries()) out.push_back(Record{prefix + e.name, e.value});
}

void assign_from_records(const std::vector<Record>& records, const std::string& prefix,
                         ParameterSet& params) {
  std::map<std::string, const Record*, std::less<>> by_name;
  for (const Record& r : records) by_name.emplace(r.name, &r);
  for (auto& e : params.entries()) {
    auto it = by_name.find(prefix + e.name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks record " + prefix + e.name);
    if (it->second->tensor.shape() != e.value.shape()) {
      throw std::runtime_error("checkpoint record " + prefix + e.name + " has shape " +
                               it->second->tensor.shape().str() + ", expected " + e.value.shape().str());
    }
    e.value = it->second->tensor;
  }
}

Record generator_meta_record(const GeneratorConfig& cfg) {
  return Record{"meta/generator",
                Tensor({1, 1, 1, 2}, {static_cast<float>(cfg.depth), static_cast<float>(cfg.base_width)})};
}

GeneratorPair generators_from_records(const std::vector<Record>& records) {
  auto it = std::find_if(records.begin(), records.end(),
                         [](const Record& r) { return r.name == "meta/generator"; });
  if (it == records.end() || it->tensor.numel() != 2) {
    throw std::runtime_error("checkpoint lacks a valid meta/generator record");
  }
  GeneratorConfig cfg;
  cfg.depth = static_cast<int>(it->tensor[0]);
  cfg.base_width = static_cast<int>(it->tensor[1]);
  GeneratorPair pair{GeneratorNet(cfg), GeneratorNet(cfg)};
  assign_from_records(records, "g_v2r/", pair.v2r.params());
  assign_from_records(records, "g_r2v/", pair.r2v.params());
  return pair;
}

void save_generators(const std::string& path, const GeneratorPair& pair) {
  std::vector<Record> records{generator_meta_record(pair.v2r.config())};
  append_records(records, "g_v2r/", pair.v2r.params());
  append_records(records, "g_r2v/", pair.r2v.params());
  save_container(path, records);
}

GeneratorPair load_generators(const std::string& path) { return generators_from_records(load_container(path)); }

}  // namespace sggan
