#include "gdas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gdas/rng.hpp"

namespace gdas {

Tensor Dataset::batch_images(std::span<const std::size_t> indices) const {
  const std::size_t n = image_numel();
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("dataset index out of range");
    std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return Tensor::from({indices.size(), channels, height, width}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Tensor Dataset::all_images() const {
  return Tensor::from({size(), channels, height, width}, images);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.num_classes = num_classes;
  const Tensor imgs = batch_images(indices);
  out.images.assign(imgs.data().begin(), imgs.data().end());
  out.labels = batch_labels(indices);
  return out;
}

Dataset make_oriented_edges(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.size == 0 || spec.image_size < 3 || spec.num_classes < 2 || spec.num_classes > 4 ||
      spec.segment_length == 0 || spec.segment_length > spec.image_size) {
    throw std::invalid_argument("synthetic dataset: need size >= 1, image_size >= 3, "
                                "2..4 classes and 1 <= segment_length <= image_size");
  }
  static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  Rng rng(derive_seed(seed, "synthetic_dataset"));
  Dataset d;
  d.channels = 1;
  d.height = d.width = spec.image_size;
  d.num_classes = spec.num_classes;
  const auto s = static_cast<int>(spec.image_size);
  const auto len = static_cast<int>(spec.segment_length);
  d.images.resize(spec.size * d.image_numel());
  d.labels.resize(spec.size);
  for (std::size_t n = 0; n < spec.size; ++n) {
    const int label = static_cast<int>(n % spec.num_classes);
    d.labels[n] = label;
    double* img = d.images.data() + n * d.image_numel();
    for (std::size_t p = 0; p < d.image_numel(); ++p) img[p] = spec.noise * rng.normal();
    const int dy = kDirs[label][0], dx = kDirs[label][1];
    for (std::size_t seg = 0; seg < spec.segments; ++seg) {
      // Start points are drawn so that the whole segment lies inside the image.
      const int y_lo = 0, y_hi = s - 1 - dy * (len - 1);
      const int x_lo = dx < 0 ? len - 1 : 0;
      const int x_hi = dx > 0 ? s - len : s - 1;
      const int y0 = y_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(y_hi - y_lo + 1)));
      const int x0 = x_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(x_hi - x_lo + 1)));
      for (int t = 0; t < len; ++t) img[(y0 + dy * t) * s + (x0 + dx * t)] += 1.0;
    }
  }
  // Shuffle so class order carries no information.
  std::vector<std::size_t> order(spec.size);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  return d.subset(order);
}

SplitDataset split_dataset(const Dataset& data, double fraction, std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("split_dataset: empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (n_train == 0 || n_train == data.size()) {
    throw std::invalid_argument("split_dataset: split of " + std::to_string(data.size()) +
                                " examples leaves one side empty");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split_dataset"));
  rng.shuffle(order);
  SplitDataset out;
  out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train_indices.begin(), out.train_indices.end());
  std::sort(out.valid_indices.begin(), out.valid_indices.end());
  out.train = data.subset(out.train_indices);
  out.valid = data.subset(out.valid_indices);
  return out;
}

}  // namespace gdas
