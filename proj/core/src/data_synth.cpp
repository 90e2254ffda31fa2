#include "sggan/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sggan/image_io.hpp"

namespace sggan {

Color DomainSpec::effective_mean(int c) const {
  const Color& m = classes.at(static_cast<std::size_t>(c)).mean;
  return {m[0] + illumination, m[1] + illumination, m[2] + illumination};
}

void DomainSpec::validate() const {
  if (classes.empty()) throw std::invalid_argument("domain spec '" + name + "' has no classes");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const ClassAppearance& a = classes[c];
    for (float v : a.mean) {
      if (v < -1.0f || v > 1.0f) {
        throw std::invalid_argument("domain spec '" + name + "': class " + std::to_string(c) +
                                    " mean outside [-1, 1]");
      }
    }
    if (a.jitter_std < 0.0f || a.texture_amp < 0.0f || a.texture_scale < 1.0f) {
      throw std::invalid_argument("domain spec '" + name + "': class " + std::to_string(c) +
                                  " has negative jitter/texture or scale < 1");
    }
  }
}

DomainSpec virtual_spec(int num_classes) {
  if (num_classes == 4) {
    return DomainSpec{"virtual",
                      {
                          {{0.35f, 0.60f, 0.85f}, 0.03f, 0.02f, 16.0f},    // sky
                          {{-0.05f, -0.05f, -0.05f}, 0.03f, 0.04f, 8.0f},  // road
                          {{0.45f, 0.25f, 0.05f}, 0.03f, 0.06f, 4.0f},     // construction
                          {{0.80f, -0.55f, -0.50f}, 0.03f, 0.02f, 16.0f},  // vehicle
                      },
                      0.05f};
  }
  if (num_classes == 8) {
    return DomainSpec{"virtual",
                      {
                          {{-0.80f, -0.80f, -0.80f}, 0.02f, 0.02f, 8.0f},  // void
                          {{-0.05f, -0.05f, -0.05f}, 0.03f, 0.04f, 8.0f},  // flat
                          {{0.45f, 0.25f, 0.05f}, 0.03f, 0.06f, 4.0f},     // construction
                          {{0.70f, 0.70f, -0.40f}, 0.03f, 0.02f, 4.0f},    // object
                          {{-0.30f, 0.55f, -0.30f}, 0.03f, 0.08f, 2.0f},   // nature
                          {{0.35f, 0.60f, 0.85f}, 0.03f, 0.02f, 16.0f},    // sky
                          {{0.60f, 0.10f, 0.60f}, 0.03f, 0.02f, 4.0f},     // human
                          {{0.80f, -0.55f, -0.50f}, 0.03f, 0.02f, 16.0f},  // vehicle
                      },
                      0.05f};
  }
  throw std::invalid_argument("virtual_spec: num_classes must be 4 or 8");
}

DomainSpec real_spec(int num_classes) {
  if (num_classes == 4) {
    return DomainSpec{"real",
                      {
                          {{0.67f, 0.70f, 0.73f}, 0.03f, 0.02f, 16.0f},     // sky: hazy grey
                          {{-0.10f, -0.03f, 0.27f}, 0.03f, 0.06f, 2.0f},    // road: bluish, coarse
                          {{0.63f, 0.20f, 0.23f}, 0.03f, 0.08f, 3.0f},      // construction: brick
                          {{0.52f, -0.60f, -0.32f}, 0.03f, 0.02f, 16.0f},   // vehicle
                      },
                      -0.10f};
  }
  if (num_classes == 8) {
    return DomainSpec{"real",
                      {
                          {{-0.70f, -0.70f, -0.70f}, 0.02f, 0.02f, 8.0f},
                          {{-0.10f, -0.03f, 0.27f}, 0.03f, 0.06f, 2.0f},
                          {{0.63f, 0.20f, 0.23f}, 0.03f, 0.08f, 3.0f},
                          {{0.50f, 0.50f, -0.20f}, 0.03f, 0.04f, 4.0f},
                          {{-0.40f, 0.30f, -0.40f}, 0.03f, 0.10f, 2.0f},
                          {{0.67f, 0.70f, 0.73f}, 0.03f, 0.02f, 16.0f},
                          {{0.30f, -0.10f, 0.30f}, 0.03f, 0.04f, 4.0f},
                          {{0.52f, -0.60f, -0.32f}, 0.03f, 0.02f, 16.0f},
                      },
                      -0.10f};
  }
  throw std::invalid_argument("real_spec: num_classes must be 4 or 8");
}

namespace {

struct Rect {
  std::size_t y0, y1, x0, x1;  // half-open
};

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
}

void fill(std::vector<std::int32_t>& labels, std::size_t w, const Rect& r, std::int32_t c) {
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) labels[y * w + x] = c;
  }
}

// Random rectangle of the given size range whose bottom edge sits in [bottom_lo, bottom_hi].
Rect place(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t min_w, std::size_t max_w,
           std::size_t min_h, std::size_t max_h, std::size_t bottom_lo, std::size_t bottom_hi) {
  const std::size_t rw = uniform_index(rng, min_w, max_w);
  const std::size_t rh = uniform_index(rng, min_h, max_h);
  const std::size_t x0 = uniform_index(rng, 0, w > rw ? w - rw : 0);
  const std::size_t bottom = std::min(uniform_index(rng, bottom_lo, bottom_hi), h);
  const std::size_t y0 = bottom > rh ? bottom - rh : 0;
  return Rect{y0, bottom, x0, std::min(x0 + rw, w)};
}

std::vector<std::int32_t> layout_desk(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::vector<std::int32_t> labels(h * w, kSky);
  const std::size_t horizon = uniform_index(rng, h * 35 / 100, h * 50 / 100);
  fill(labels, w, Rect{horizon, h, 0, w}, kRoad);
  const std::size_t buildings = uniform_index(rng, 2, 4);
  for (std::size_t i = 0; i < buildings; ++i) {
    fill(labels, w,
         place(rng, h, w, w / 8, w / 3, h / 5, horizon > 2 ? horizon - 2 : 1, horizon, horizon + h / 16),
         kConstruction);
  }
  const std::size_t vehicles = uniform_index(rng, 1, 3);
  for (std::size_t i = 0; i < vehicles; ++i) {
    fill(labels, w, place(rng, h, w, w / 10, w / 4, h / 10, h / 5, horizon + h / 8, h - 1), kVehicle);
  }
  return labels;
}

std::vector<std::int32_t> layout_8(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::vector<std::int32_t> labels(h * w, kSky8);
  const std::size_t horizon = uniform_index(rng, h * 35 / 100, h * 50 / 100);
  fill(labels, w, Rect{horizon, h, 0, w}, kFlat8);
  const std::size_t trees = uniform_index(rng, 1, 3);
  for (std::size_t i = 0; i < trees; ++i) {
    fill(labels, w, place(rng, h, w, w / 10, w / 5, h / 6, h / 3, horizon, horizon + h / 20), kNature8);
  }
  const std::size_t buildings = uniform_index(rng, 2, 3);
  for (std::size_t i = 0; i < buildings; ++i) {
    fill(labels, w,
         place(rng, h, w, w / 8, w / 4, h / 5, horizon > 2 ? horizon - 2 : 1, horizon, horizon + h / 16),
         kConstruction8);
  }
  const std::size_t poles = uniform_index(rng, 1, 2);
  for (std::size_t i = 0; i < poles; ++i) {
    fill(labels, w, place(rng, h, w, 2, 3, h / 4, h / 2, horizon + h / 10, horizon + h / 5), kObject8);
  }
  fill(labels, w, place(rng, h, w, 3, 5, h / 8, h / 5, horizon + h / 6, h - h / 6), kHuman8);
  const std::size_t vehicles = uniform_index(rng, 1, 2);
  for (std::size_t i = 0; i < vehicles; ++i) {
    fill(labels, w, place(rng, h, w, w / 10, w / 4, h / 10, h / 5, horizon + h / 8, h - h / 10), kVehicle8);
  }
  fill(labels, w, Rect{h - std::max<std::size_t>(h / 16, 1), h, 0, w}, kVoid8);
  return labels;
}

// Uniform noise on a coarse grid of cell size `scale`, bilinearly interpolated.
std::vector<float> smooth_noise(std::mt19937_64& rng, std::size_t h, std::size_t w, float scale) {
  const std::size_t gh = static_cast<std::size_t>(std::ceil(static_cast<float>(h) / scale)) + 2;
  const std::size_t gw = static_cast<std::size_t>(std::ceil(static_cast<float>(w) / scale)) + 2;
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> grid(gh * gw);
  for (float& v : grid) v = dist(rng);
  std::vector<float> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const float fy = static_cast<float>(y) / scale;
    const auto y0 = static_cast<std::size_t>(fy);
    const float ty = fy - static_cast<float>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const float fx = static_cast<float>(x) / scale;
      const auto x0 = static_cast<std::size_t>(fx);
      const float tx = fx - static_cast<float>(x0);
      const float top = grid[y0 * gw + x0] * (1 - tx) + grid[y0 * gw + x0 + 1] * tx;
      const float bot = grid[(y0 + 1) * gw + x0] * (1 - tx) + grid[(y0 + 1) * gw + x0 + 1] * tx;
      out[y * w + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace

ScenePair generate_scene(std::uint64_t seed, const DomainSpec& spec, std::size_t h, std::size_t w) {
  if (h < 16 || w < 16) {
    throw std::invalid_argument("generate_scene: dims must be >= 16, got " + std::to_string(h) + "x" +
                                std::to_string(w));
  }
  spec.validate();
  const int s = spec.num_classes();
  if (s != 4 && s != 8) throw std::invalid_argument("generate_scene: spec must have 4 or 8 classes");

  // Independent streams: geometry must not depend on the appearance spec.
  std::seed_seq geometry_seed{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  std::seed_seq appearance_seed{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u};
  std::mt19937_64 geometry(geometry_seed);
  std::mt19937_64 appearance(appearance_seed);

  std::vector<std::int32_t> labels = s == 4 ? layout_desk(geometry, h, w) : layout_8(geometry, h, w);

  Tensor image({1, 3, h, w});
  for (int c = 0; c < s; ++c) {
    const ClassAppearance& a = spec.classes[static_cast<std::size_t>(c)];
    std::normal_distribution<float> jitter(0.0f, 1.0f);
    Color color = spec.effective_mean(c);
    for (float& v : color) v += a.jitter_std * jitter(appearance);
    const std::vector<float> noise = smooth_noise(appearance, h, w, a.texture_scale);
    for (std::size_t i = 0; i < h * w; ++i) {
      if (labels[i] != c) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        image[ch * h * w + i] = std::clamp(color[ch] + a.texture_amp * noise[i], -1.0f, 1.0f);
      }
    }
  }
  return ScenePair{std::move(image), LabelMap(1, h, w, s, std::move(labels))};
}

// ---- clustering ---------------------------------------------------------

void ClassClustering::validate() const {
  if (raw_count < 1 || clustered_count < 1) throw std::invalid_argument("clustering: empty class sets");
  if (mapping.size() != static_cast<std::size_t>(raw_count)) {
    throw std::invalid_argument("clustering: mapping must cover all " + std::to_string(raw_count) +
                                " raw ids");
  }
  std::vector<bool> used(static_cast<std::size_t>(clustered_count), false);
  for (std::int32_t m : mapping) {
    if (m < 0 || m >= clustered_count) throw std::invalid_argument("clustering: target id out of range");
    used[static_cast<std::size_t>(m)] = true;
  }
  if (std::find(used.begin(), used.end(), false) != used.end()) {
    throw std::invalid_argument("clustering: clustered ids are not dense");
  }
}

const std::vector<std::string>& street_class_names() {
  static const std::vector<std::string> names = {
      "unlabeled", "ego vehicle", "rectification border", "out of roi", "static", "dynamic", "ground",
      "road", "sidewalk", "parking", "rail track",
      "building", "wall", "fence", "guard rail", "bridge", "tunnel",
      "pole", "traffic light", "traffic sign",
      "vegetation", "terrain", "sky",
      "person", "rider",
      "car", "truck", "bus", "train", "motorcycle"};
  return names;
}

ClassClustering street_clustering() {
  ClassClustering c;
  c.raw_count = 30;
  c.clustered_count = 8;
  c.mapping = {kVoid8, kVoid8, kVoid8, kVoid8, kVoid8, kVoid8, kVoid8,
               kFlat8, kFlat8, kFlat8, kFlat8,
               kConstruction8, kConstruction8, kConstruction8, kConstruction8, kConstruction8, kConstruction8,
               kObject8, kObject8, kObject8,
               kNature8, kNature8, kSky8,
               kHuman8, kHuman8,
               kVehicle8, kVehicle8, kVehicle8, kVehicle8, kVehicle8};
  return c;
}

LabelMap cluster_labels(const LabelMap& labels, const ClassClustering& c) {
  c.validate();
  if (labels.num_classes() > c.raw_count) {
    throw std::invalid_argument("cluster_labels: label map has " + std::to_string(labels.num_classes()) +
                                " classes but the clustering maps only " + std::to_string(c.raw_count));
  }
  std::vector<std::int32_t> out(labels.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = c.mapping.at(static_cast<std::size_t>(labels.values()[i]));
  }
  return LabelMap(labels.batch(), labels.height(), labels.width(), c.clustered_count, std::move(out));
}

// ---- statistics ---------------------------------------------------------

std::vector<ClassStats> domain_stats(const std::vector<ScenePair>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("domain_stats: empty corpus");
  const int s = corpus.front().labels.num_classes();
  std::vector<std::array<double, 3>> sum(static_cast<std::size_t>(s), {0, 0, 0});
  std::vector<std::array<double, 3>> sq(static_cast<std::size_t>(s), {0, 0, 0});
  std::vector<double> energy(static_cast<std::size_t>(s), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(s), 0);
  std::vector<std::size_t> inner(static_cast<std::size_t>(s), 0);
  const FilterPair sobel = sobel_pair();
  for (const ScenePair& scene : corpus) {
    if (scene.labels.num_classes() != s) throw std::invalid_argument("domain_stats: mixed class counts");
    const std::size_t hw = scene.labels.height() * scene.labels.width();
    const Tensor grad = gradient_magnitude(scene.image, sobel);
    const std::size_t h = scene.labels.height(), w = scene.labels.width();
    const auto& lv = scene.labels.values();
    for (std::size_t i = 0; i < hw; ++i) {
      const auto c = static_cast<std::size_t>(lv[i]);
      ++count[c];
      // Texture energy only where the whole 3x3 window is inside the image
      // and inside the class, so borders and class edges do not count.
      const std::size_t y = i / w, x = i % w;
      bool interior = y > 0 && x > 0 && y + 1 < h && x + 1 < w;
      for (std::size_t dy = 0; interior && dy < 3; ++dy)
        for (std::size_t dx = 0; interior && dx < 3; ++dx) interior = lv[(y + dy - 1) * w + x + dx - 1] == lv[i];
      if (interior) {
        ++inner[c];
        energy[c] += grad[i];
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = scene.image[ch * hw + i];
        sum[c][ch] += v;
        sq[c][ch] += v * v;
      }
    }
  }
  std::vector<ClassStats> out(static_cast<std::size_t>(s));
  for (std::size_t c = 0; c < out.size(); ++c) {
    ClassStats& st = out[c];
    st.pixels = count[c];
    st.present = count[c] > 0;
    if (!st.present) continue;
    const auto n = static_cast<double>(count[c]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double m = sum[c][ch] / n;
      st.mean[ch] = static_cast<float>(m);
      st.stddev[ch] = static_cast<float>(std::sqrt(std::max(0.0, sq[c][ch] / n - m * m)));
    }
    st.gradient_energy = inner[c] > 0 ? energy[c] / static_cast<double>(inner[c]) : 0.0;
  }
  return out;
}

// ---- corpora on disk ----------------------------------------------------

namespace {

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.png", i);
  return buf;
}

}  // namespace

void write_corpus(const std::string& root, const std::string& domain, const DomainSpec& spec,
                  std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(root) / domain;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t sample_seed = seed + i;
    const ScenePair scene = generate_scene(sample_seed, spec, h, w);
    const std::string image_rel = "images/" + sample_name(i);
    const std::string label_rel = "labels/" + sample_name(i);
    save_image((dir / image_rel).string(), scene.image);
    save_labels((dir / label_rel).string(), scene.labels);
    manifest << i << ' ' << image_rel << ' ' << label_rel << ' ' << sample_seed << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing manifest in " + dir.string());
}

std::vector<ManifestEntry> read_manifest(const std::string& domain_dir) {
  const std::string path = (std::filesystem::path(domain_dir) / "manifest.txt").string();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.index >> e.image_path >> e.label_path >> e.seed)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed manifest line");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

Corpus load_corpus(const std::string& domain_dir, int num_classes, bool with_labels) {
  namespace fs = std::filesystem;
  Corpus corpus;
  for (const ManifestEntry& e : read_manifest(domain_dir)) {
    ScenePair scene;
    scene.image = load_image((fs::path(domain_dir) / e.image_path).string());
    if (with_labels) {
      scene.labels = load_labels((fs::path(domain_dir) / e.label_path).string(), num_classes);
      if (scene.labels.height() != scene.image.shape().h || scene.labels.width() != scene.image.shape().w) {
        throw std::runtime_error(domain_dir + ": image and label sizes differ for sample " +
                                 std::to_string(e.index));
      }
    }
    corpus.scenes.push_back(std::move(scene));
    corpus.seeds.push_back(e.seed);
    corpus.image_paths.push_back(e.image_path);
  }
  return corpus;
}

}  // namespace sggan
