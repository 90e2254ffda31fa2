#pragma once

#include <string>

#include "sggan/gradfilters.hpp"
#include "sggan/tensor.hpp"

namespace sggan {

/// 8-bit RGB PNG; [-1, 1] maps linearly onto [0, 255]. Image shape (1, 3, H, W).
void save_image(const std::string& path, const Tensor& image);
Tensor load_image(const std::string& path);

/// 8-bit grayscale PNG of class ids. Label map batch must be 1.
void save_labels(const std::string& path, const LabelMap& labels);
LabelMap load_labels(const std::string& path, int num_classes);

}  // namespace sggan
