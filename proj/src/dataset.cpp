#include "bitfault/dataset.hpp"

#include "bitfault/error.hpp"
#include "bitfault/rng.hpp"

#include <cmath>
#include <numeric>

namespace bitfault {

Shape Dataset::sample_shape() const {
    const Shape& s = features.shape();
    return Shape(s.begin() + 1, s.end());
}

DenseTensor Dataset::sample(std::size_t i) const {
    Shape shape = sample_shape();
    const std::size_t row = numel(shape);
    if (i >= size()) {
        throw Error(ErrorCode::IndexOutOfRange, "sample " + std::to_string(i));
    }
    const auto src = features.data().subspan(i * row, row);
    return DenseTensor(std::move(shape), std::vector<float>(src.begin(), src.end()));
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows, Split tag) {
    const Shape sample = d.sample_shape();
    const std::size_t row = numel(sample);
    Shape shape{rows.size()};
    shape.insert(shape.end(), sample.begin(), sample.end());

    Dataset out;
    std::vector<float> data;
    data.reserve(rows.size() * row);
    const auto src = d.features.data();
    for (auto r : rows) {
        data.insert(data.end(), src.begin() + static_cast<std::ptrdiff_t>(r * row),
                    src.begin() + static_cast<std::ptrdiff_t>((r + 1) * row));
        out.labels.push_back(d.labels.at(r));
        out.source_indices.push_back(d.source_indices.empty() ? r : d.source_indices[r]);
    }
    out.features = DenseTensor(std::move(shape), std::move(data));
    out.n_classes = d.n_classes;
    out.split = tag;
    out.seed = d.seed;
    return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& all, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "test_fraction must lie in (0, 1)");
    }
    const std::size_t n = all.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SplitMix64 rng(derive_seed(all.seed, 0x5EED5917ULL));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    return {subset(all, train, Split::Train), subset(all, test, Split::Test)};
}

} // namespace bitfault
