#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sggan/gradfilters.hpp"
#include "sggan/tensor.hpp"

namespace sggan {

using Color = std::array<float, 3>;

/// Appearance of one semantic class in one domain.
struct ClassAppearance {
  Color mean{};              // RGB in [-1, 1]
  float jitter_std = 0.0f;   // per-scene colour offset, per channel
  float texture_amp = 0.0f;  // amplitude of smoothed uniform noise
  float texture_scale = 1.0f;  // noise cell size in pixels
};

/// Per-class appearance statistics of one synthetic domain.
struct DomainSpec {
  std::string name;
  std::vector<ClassAppearance> classes;
  float illumination = 0.0f;  // added to every channel of every pixel

  int num_classes() const { return static_cast<int>(classes.size()); }
  /// Expected colour of class c: mean + illumination.
  Color effective_mean(int c) const;
  void validate() const;
};

/// Desk-scale class ids (4-class mode).
enum DeskClass : std::int32_t { kSky = 0, kRoad = 1, kConstruction = 2, kVehicle = 3 };

/// Category ids of the 8-class mode.
enum Category8 : std::int32_t {
  kVoid8 = 0, kFlat8 = 1, kConstruction8 = 2, kObject8 = 3,
  kNature8 = 4, kSky8 = 5, kHuman8 = 6, kVehicle8 = 7
};

/// Bright, smooth "virtual" look. num_classes is 4 or 8.
DomainSpec virtual_spec(int num_classes = 4);
/// Darker "real" look with class-specific shifts and coarser road texture.
DomainSpec real_spec(int num_classes = 4);

struct ScenePair {
  Tensor image;     // (1, 3, H, W) in [-1, 1]
  LabelMap labels;  // (1, H, W)
};

/// Renders a layered street scene. Geometry depends only on the seed, so two
/// specs with equal class count produce identical label maps for one seed.
ScenePair generate_scene(std::uint64_t seed, const DomainSpec& spec, std::size_t h, std::size_t w);

/// Raw-id to category mapping.
struct ClassClustering {
  std::vector<std::int32_t> mapping;
  int raw_count = 0;
  int clustered_count = 0;

  void validate() const;
};

/// 30 street-scene classes grouped into the 8 categories of Category8.
ClassClustering street_clustering();
/// Names of the 30 raw classes, indexed by raw id.
const std::vector<std::string>& street_class_names();

LabelMap cluster_labels(const LabelMap& labels, const ClassClustering& c);

struct ClassStats {
  bool present = false;
  std::size_t pixels = 0;
  Color mean{};
  Color stddev{};
  double gradient_energy = 0.0;  // mean Sobel magnitude over pixels whose 3x3 window is all this class
};

/// Per-class statistics over every pixel of a corpus.
std::vector<ClassStats> domain_stats(const std::vector<ScenePair>& corpus);

// ---- on-disk corpora ----------------------------------------------------

/// Scenes plus the seeds they were generated from (0 when unknown).
struct Corpus {
  std::vector<ScenePair> scenes;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> image_paths;  // relative to the domain directory
};

struct ManifestEntry {
  std::size_t index = 0;
  std::string image_path;
  std::string label_path;
  std::uint64_t seed = 0;
};

/// Writes `<root>/<domain>/images/NNNNNN.png`, `labels/NNNNNN.png` and
/// `manifest.txt` (one "index image label seed" line per sample). Sample i
/// uses seed `seed + i`.
void write_corpus(const std::string& root, const std::string& domain, const DomainSpec& spec,
                  std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed);

std::vector<ManifestEntry> read_manifest(const std::string& domain_dir);
/// Loads a domain directory written by write_corpus. With `with_labels`
/// false only images are read.
Corpus load_corpus(const std::string& domain_dir, int num_classes, bool with_labels = true);

}  // namespace sggan
