#include "sggan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace sggan {

namespace {

void check_aligned(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const std::vector<LabelMap>& labels) {
  if (a.size() != b.size() || a.size() != labels.size()) {
    throw std::invalid_argument("misaligned corpora: " + std::to_string(a.size()) + " / " +
                                std::to_string(b.size()) + " images, " + std::to_string(labels.size()) + " label maps");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Shape& sa = a[i].shape();
    if (sa != b[i].shape() || sa.n != 1 || sa.c != 3 || labels[i].batch() != 1 ||
        labels[i].height() != sa.h || labels[i].width() != sa.w) {
      throw std::invalid_argument("misaligned pair " + std::to_string(i) + ": " + sa.str() + " vs " +
                                  b[i].shape().str() + " with labels " + std::to_string(labels[i].height()) + "x" +
                                  std::to_string(labels[i].width()));
    }
  }
}

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Content-defined order, so summation order (and every reported bit) does
// not depend on how the corpus was listed.
std::vector<std::size_t> canonical_order(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                                         const std::vector<LabelMap>& labels) {
  std::vector<std::pair<std::uint64_t, std::size_t>> keys;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = fnv(h, a[i].data().data(), a[i].numel() * sizeof(float));
    h = fnv(h, b[i].data().data(), b[i].numel() * sizeof(float));
    h = fnv(h, labels[i].values().data(), labels[i].values().size() * sizeof(std::int32_t));
    keys.emplace_back(h, i);
  }
  std::sort(keys.begin(), keys.end());
  std::vector<std::size_t> order;
  for (const auto& k : keys) order.push_back(k.second);
  return order;
}

}  // namespace

std::vector<std::optional<Color>> class_color_means(const std::vector<Tensor>& images,
                                                    const std::vector<LabelMap>& labels, int num_classes) {
  if (images.size() != labels.size()) throw std::invalid_argument("class_color_means: image/label count mismatch");
  std::vector<std::array<double, 3>> sum(num_classes, {0.0, 0.0, 0.0});
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i];
    const LabelMap& lab = labels[i];
    for (std::size_t y = 0; y < lab.height(); ++y) {
      for (std::size_t x = 0; x < lab.width(); ++x) {
        const int c = lab(0, y, x);
        if (c >= num_classes) throw std::out_of_range("class_color_means: label exceeds class count");
        for (std::size_t ch = 0; ch < 3; ++ch) sum[c][ch] += img.at(0, ch, y, x);
        ++count[c];
      }
    }
  }
  std::vector<std::optional<Color>> out(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    if (count[c] == 0) continue;
    const double n = static_cast<double>(count[c]);
    out[c] = Color{static_cast<float>(sum[c][0] / n), static_cast<float>(sum[c][1] / n),
                   static_cast<float>(sum[c][2] / n)};
  }
  return out;
}

double color_distance(const std::optional<Color>& a, const std::optional<Color>& b) {
  if (!a || !b) return 0.0;
  double d = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double e = static_cast<double>((*a)[ch]) - (*b)[ch];
    d += e * e;
  }
  return std::sqrt(d);
}

double boundary_preservation_score(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                                   const std::vector<LabelMap>& labels) {
  check_aligned(a, b, labels);
  double diff = 0.0, total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Tensor ga = gradient_magnitude(a[i], sobel_pair());
    const Tensor gb = gradient_magnitude(b[i], sobel_pair());
    const Tensor m = boundary_mask(labels[i], label_grad_pair());
    for (std::size_t j = 0; j < m.numel(); ++j) {
      if (m[j] == 0.0f) continue;
      diff += std::fabs(static_cast<double>(ga[j]) - gb[j]);
      total += static_cast<double>(ga[j]) + gb[j];
    }
  }
  return total > 0.0 ? 1.0 - diff / total : 1.0;
}

double soft_grad_average(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                         const std::vector<LabelMap>& labels, const SoftnessParams& p) {
  check_aligned(a, b, labels);
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    Graph g;
    sum += soft_grad_loss(g.constant(a[i]), g.constant(b[i]), labels[i], p).value().item();
  }
  return sum / static_cast<double>(a.size());
}

LabelMap classify_by_color(const Tensor& image, const DomainSpec& spec) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("classify_by_color: expected (1, 3, H, W), got " + s.str());
  std::vector<Color> means;
  for (int c = 0; c < spec.num_classes(); ++c) means.push_back(spec.effective_mean(c));
  std::vector<std::int32_t> out(s.h * s.w, 0);
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < spec.num_classes(); ++c) {
        double d = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double e = static_cast<double>(image.at(0, ch, y, x)) - means[c][ch];
          d += e * e;
        }
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      out[y * s.w + x] = best_c;
    }
  }
  return LabelMap(1, s.h, s.w, spec.num_classes(), std::move(out));
}

double boundary_label_agreement(const std::vector<Tensor>& images, const std::vector<LabelMap>& labels,
                                const DomainSpec& spec) {
  if (images.size() != labels.size()) throw std::invalid_argument("boundary_label_agreement: count mismatch");
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const LabelMap derived = classify_by_color(images[i], spec);
    const Tensor m = boundary_mask(labels[i], label_grad_pair());
    for (std::size_t y = 0; y < labels[i].height(); ++y) {
      for (std::size_t x = 0; x < labels[i].width(); ++x) {
        if (m.at(0, 0, y, x) == 0.0f) continue;
        ++total;
        if (derived(0, y, x) == labels[i](0, y, x)) ++hit;
      }
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

namespace {
EvalReport evaluate_canonical(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                              const std::vector<LabelMap>& labels, int num_classes, const SoftnessParams& p);
}  // namespace

EvalReport evaluate_pairs(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                          const std::vector<LabelMap>& labels, int num_classes, const SoftnessParams& p) {
  check_aligned(a, b, labels);
  if (a.empty()) throw std::invalid_argument("evaluate_pairs: no image pairs");
  std::vector<Tensor> ca, cb;
  std::vector<LabelMap> cl;
  for (std::size_t i : canonical_order(a, b, labels)) {
    ca.push_back(a[i]);
    cb.push_back(b[i]);
    cl.push_back(labels[i]);
  }
  return evaluate_canonical(ca, cb, cl, num_classes, p);
}

namespace {

EvalReport evaluate_canonical(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                              const std::vector<LabelMap>& labels, int num_classes, const SoftnessParams& p) {
  EvalReport r;
  r.pairs = a.size();
  const auto ma = class_color_means(a, labels, num_classes);
  const auto mb = class_color_means(b, labels, num_classes);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (ma[c] && mb[c]) {
      r.class_distance.emplace_back(color_distance(ma[c], mb[c]));
      sum += *r.class_distance.back();
      ++present;
    } else {
      r.class_distance.emplace_back(std::nullopt);
    }
  }
  r.mean_class_distance = present ? sum / present : 0.0;
  r.boundary_score = boundary_preservation_score(a, b, labels);
  r.soft_grad_mean = soft_grad_average(a, b, labels, p);
  return r;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["pairs"] = pairs;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& d : class_distance) per.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
  j["class_color_distance"] = per;
  j["mean_class_color_distance"] = mean_class_distance;
  j["boundary_preservation_score"] = boundary_score;
  j["soft_grad_loss_mean"] = soft_grad_mean;
  return j.dump(2);
}

}  // namespace sggan
