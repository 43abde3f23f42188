#include "bitfault/tensor.hpp"

#include "bitfault/error.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace bitfault {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), 0.0f) {}

DenseTensor::DenseTensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
        throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                                  " does not match shape " + shape_to_string(shape_));
    }
}

DenseTensor DenseTensor::reshaped(Shape shape) const {
    return DenseTensor(std::move(shape), data_);
}

bool DenseTensor::bit_equal(const DenseTensor& other) const noexcept {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

std::int32_t quantize_scalar(float x) {
    // x * 2^24 is exact in double for every float; nearbyint uses the
    // current rounding mode, which is round-to-nearest-even by default.
    return static_cast<std::int32_t>(std::nearbyint(static_cast<double>(x) * QuantTensor::kScale));
}

float dequantize_scalar(std::int32_t code) noexcept {
    return static_cast<float>(static_cast<double>(code) * QuantTensor::kStep);
}

QuantTensor quantize(const DenseTensor& t) {
    QuantTensor q{t.shape(), std::vector<std::int32_t>(t.size())};
    const auto src = t.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (!(std::fabs(src[i]) < 128.0f)) {
            throw Error(ErrorCode::RangeExceeded, "element " + std::to_string(i) + " outside (-128, 128)");
        }
        q.codes[i] = quantize_scalar(src[i]);
    }
    return q;
}

DenseTensor dequantize(const QuantTensor& q) {
    DenseTensor t(q.shape);
    auto dst = t.data();
    if (dst.size() != q.codes.size()) {
        throw Error(ErrorCode::ShapeMismatch, "code count does not match shape");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = dequantize_scalar(q.codes[i]);
    }
    return t;
}

SparseTensor to_coo(const DenseTensor& t) {
    SparseTensor s;
    s.dense_shape = t.shape();
    const std::size_t rank = t.rank();
    const auto src = t.data();
    std::vector<std::uint32_t> coord(rank, 0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        // Nonzero means "not the all-zero bit pattern", so -0.0 is kept and
        // the round trip through from_coo is bitwise exact.
        if (to_bits(src[i]).raw != 0) {
            std::size_t rem = i;
            for (std::size_t d = rank; d-- > 0;) {
                coord[d] = static_cast<std::uint32_t>(rem % s.dense_shape[d]);
                rem /= s.dense_shape[d];
            }
            s.indices.insert(s.indices.end(), coord.begin(), coord.end());
            s.values.push_back(src[i]);
        }
    }
    return s;
}

DenseTensor from_coo(const SparseTensor& s) {
    DenseTensor t(s.dense_shape);
    const std::size_t rank = s.rank();
    if (s.indices.size() != s.nnz() * rank) {
        throw Error(ErrorCode::ShapeMismatch, "index array does not hold nnz x rank coordinates");
    }
    if (t.size() == 0) {
        return t;
    }
    auto dst = t.data();
    for (std::size_t e = 0; e < s.nnz(); ++e) {
        std::size_t flat = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            flat = flat * s.dense_shape[d] + s.indices[e * rank + d] % s.dense_shape[d];
        }
        dst[flat] = s.values[e];
    }
    return t;
}

} // namespace bitfault
