#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sggan/data_synth.hpp"
#include "sggan/losses.hpp"

namespace sggan {

/// Per-class mean colour over a set of images under their label maps.
/// Classes with no pixels are empty.
std::vector<std::optional<Color>> class_color_means(const std::vector<Tensor>& images,
                                                    const std::vector<LabelMap>& labels, int num_classes);

/// Euclidean RGB distance; 0 when either side is missing.
double color_distance(const std::optional<Color>& a, const std::optional<Color>& b);

/// Agreement of Sobel gradient magnitudes of paired images on label
/// boundaries: 1 - sum_m |g_a - g_b| / sum_m (g_a + g_b). 1 means identical
/// boundary gradients; 1 is also returned when no boundary carries gradient.
double boundary_preservation_score(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                                   const std::vector<LabelMap>& labels);

/// Average soft gradient-sensitive loss over the pairs.
double soft_grad_average(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                         const std::vector<LabelMap>& labels, const SoftnessParams& p);

/// Nearest class by RGB distance to the spec's effective means.
LabelMap classify_by_color(const Tensor& image, const DomainSpec& spec);

/// Fraction of boundary-mask pixels whose colour-derived class matches the
/// original label; 1 when there are no boundary pixels.
double boundary_label_agreement(const std::vector<Tensor>& images, const std::vector<LabelMap>& labels,
                                const DomainSpec& spec);

struct EvalReport {
  std::vector<std::optional<double>> class_distance;  // per class, empty when absent
  double mean_class_distance = 0.0;                   // over classes present in both
  double boundary_score = 1.0;
  double soft_grad_mean = 0.0;
  std::size_t pairs = 0;

  std::string to_json() const;
};

/// Compares two aligned image sets sharing one set of label maps. The
/// result does not depend on the order of the pairs.
EvalReport evaluate_pairs(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                          const std::vector<LabelMap>& labels, int num_classes,
                          const SoftnessParams& p = {0.9f, 0.1f});

}  // namespace sggan
