#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sggan/gradfilters.hpp"
#include "sggan/graph.hpp"
#include "sggan/tensor.hpp"

namespace sggan {

/// Ordered, named parameter tensors of one network.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  /// Registers a parameter and returns its index. Names must be unique.
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  /// Total number of scalars.
  std::size_t scalar_count() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Parameters placed into a graph, in registration order.
struct BoundParams {
  std::vector<Var> vars;
  Var operator[](std::size_t i) const { return vars[i]; }
};

/// Trainable parameters become graph variables; otherwise constants.
BoundParams bind(Graph& graph, const ParameterSet& params, bool trainable);

struct GeneratorConfig {
  int depth = 4;
  int base_width = 32;
  std::uint64_t seed = 0;
};

/// U-Net: `depth` stride-2 encoder levels (conv, instance norm, leaky-ReLU),
/// a mirrored decoder (transpose conv, instance norm, ReLU) whose level k
/// concatenates encoder level depth - k, and a full-resolution output conv
/// that also sees the input image, followed by tanh.
class GeneratorNet {
 public:
  explicit GeneratorNet(const GeneratorConfig& cfg);

  const GeneratorConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Channel width of encoder level i (0-based).
  int width(int level) const;
  /// Spatial dims must be multiples of this.
  std::size_t size_multiple() const { return std::size_t{1} << cfg_.depth; }

  Var forward(const BoundParams& p, Var image) const;

 private:
  struct Level {
    std::size_t conv = 0;
    std::size_t scale = 0;
    std::size_t shift = 0;
    bool normed = false;
  };

  GeneratorConfig cfg_;
  ParameterSet params_;
  std::vector<Level> encoder_;
  std::vector<Level> decoder_;
  std::size_t out_conv_ = 0;
  std::size_t out_bias_ = 0;
};

GeneratorNet build_generator(const GeneratorConfig& cfg);

/// Adapted image (graph form). `trainable` selects variable vs constant parameters.
Var generator_forward(const GeneratorNet& g, Graph& graph, Var image, bool trainable);
Tensor generator_forward(const GeneratorNet& g, const Tensor& image);

struct DiscriminatorConfig {
  int num_blocks = 4;
  int base_width = 64;
  int num_classes = 8;
  std::uint64_t seed = 0;
};

/// PatchGAN-style trunk of stride-2 blocks (conv, instance norm except on
/// the first block, leaky-ReLU 0.2) and a stride-1 3x3 conv emitting one
/// channel per semantic class.
class SemanticDiscriminatorNet {
 public:
  explicit SemanticDiscriminatorNet(const DiscriminatorConfig& cfg);

  const DiscriminatorConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.num_classes; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Final feature map T_k of shape (N, num_classes, h_k, w_k).
  Var trunk(const BoundParams& p, Var image) const;

 private:
  struct Block {
    std::size_t conv = 0;
    std::size_t bias = 0;
    std::size_t scale = 0;
    std::size_t shift = 0;
    bool normed = false;
  };

  DiscriminatorConfig cfg_;
  ParameterSet params_;
  std::vector<Block> blocks_;
  std::size_t final_conv_ = 0;
  std::size_t final_bias_ = 0;
};

SemanticDiscriminatorNet build_discriminator(const DiscriminatorConfig& cfg);

/// Spatial dims (h_k, w_k) of the trunk output for an input of the given size.
std::pair<std::size_t, std::size_t> discriminator_receptive_dims(const SemanticDiscriminatorNet& d,
                                                                 std::size_t input_h,
                                                                 std::size_t input_w);

/// One-hot encoding (N, s, target_h, target_w) of a label map, resized
/// nearest-neighbour so every pixel stays exactly one-hot.
Tensor one_hot_mask(const LabelMap& labels, int num_classes, std::size_t target_h,
                    std::size_t target_w);

/// Patch scores (N, 1, h_k, w_k): the trunk output multiplied by the mask
/// and summed over classes, so each location is scored by its own class channel.
Var sd_forward(const SemanticDiscriminatorNet& d, const BoundParams& p, Var image, const Tensor& mask);

/// Raw single-channel trunk output of a num_classes == 1 network (standard PatchGAN).
Var patchgan_forward(const SemanticDiscriminatorNet& d, const BoundParams& p, Var image);

// ---- checkpoint container ----------------------------------------------

/// One named tensor of a checkpoint container.
struct Record {
  std::string name;
  Tensor tensor;
  friend bool operator==(const Record&, const Record&) = default;
};

inline constexpr std::uint32_t kContainerVersion = 1;

/// Layout (all integers little-endian u32, floats little-endian IEEE-754):
///   "SGGN" | version | record count |
///   per record: name length | UTF-8 name | 4 shape dims | data |
///   CRC-32 of every preceding byte.
void write_container(std::ostream& out, const std::vector<Record>& records);
std::vector<Record> read_container(std::istream& in);
void save_container(const std::string& path, const std::vector<Record>& records);
std::vector<Record> load_container(const std::string& path);

/// Appends the parameters as records named "<prefix><param name>".
void append_records(std::vector<Record>& out, const std::string& prefix, const ParameterSet& params);
/// Overwrites every parameter from records named "<prefix><param name>";
/// shapes must match.
void assign_from_records(const std::vector<Record>& records, const std::string& prefix,
                         ParameterSet& params);

/// Stand-alone generator pair file used by inference: both generators plus
/// their configuration.
struct GeneratorPair {
  GeneratorNet v2r;
  GeneratorNet r2v;
};
void save_generators(const std::string& path, const GeneratorPair& pair);
GeneratorPair load_generators(const std::string& path);
/// Reconstructs a generator pair from any container holding "g_v2r/" and
/// "g_r2v/" parameters and the "meta/generator" record.
GeneratorPair generators_from_records(const std::vector<Record>& records);
Record generator_meta_record(const GeneratorConfig& cfg);

}  // namespace sggan
