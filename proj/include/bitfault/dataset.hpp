#pragma once

#include "bitfault/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bitfault {

enum class Split { All, Train, Test };

/// Labeled samples stored back to back: features has shape [n, sample_shape...].
struct Dataset {
    DenseTensor features;
    std::vector<int> labels;
    std::size_t n_classes = 0;
    Split split = Split::All;
    std::uint64_t seed = 0;
    /// Row index of each sample in the unsplit parent dataset.
    std::vector<std::size_t> source_indices;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
    DenseTensor sample(std::size_t i) const;
};

/// Deterministic split: permute row indices with the dataset seed and put
/// the first round(n * test_fraction) rows into the test set.
std::pair<Dataset, Dataset> train_test_split(const Dataset& all, double test_fraction);

/// Rows listed in `rows`, in that order.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows, Split tag);

} // namespace bitfault
