#include "cnmix/data.hpp"

namespace cnmix {

bool ImageBatch::valid() const {
  if (n < 1 || channels < 1 || height < 1 || width < 1 || num_classes < 1) return false;
  if (pixels.size() != static_cast<std::size_t>(n) * sample_size()) return false;
  if (labels.size() != static_cast<std::size_t>(n)) return false;
  for (int label : labels)
    if (label < 0 || label >= num_classes) return false;
  return all_finite(std::span<const float>(pixels.data(), pixels.size()));
}

} // namespace cnmix
