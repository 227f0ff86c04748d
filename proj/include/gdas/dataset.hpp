#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gdas/tensor.hpp"

namespace gdas {

// Labeled images stored NCHW.
struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<double> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_numel() const { return channels * height * width; }
  Tensor batch_images(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  Tensor all_images() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// Synthetic orientation task: each image holds a few line segments of one
// orientation (horizontal, vertical, diagonal, anti-diagonal) over Gaussian
// pixel noise; the orientation is the label.
struct SyntheticSpec {
  std::size_t size = 256;
  std::size_t image_size = 8;
  std::size_t num_classes = 4;
  double noise = 0.3;
  std::size_t segments = 2;
  std::size_t segment_length = 4;
};

Dataset make_oriented_edges(const SyntheticSpec& spec, std::uint64_t seed);

struct SplitDataset {
  Dataset train;
  Dataset valid;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> valid_indices;
};

// Random partition: round(fraction * n) examples go to train, the rest to
// valid. Throws std::invalid_argument on an empty dataset, a fraction outside
// (0, 1), or a split that leaves either side empty.
SplitDataset split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace gdas
