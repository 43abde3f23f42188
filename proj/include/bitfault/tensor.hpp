#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bitfault {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raw 32-bit word; the carrier for all mask arithmetic.
struct BitPattern32 {
    std::uint32_t raw = 0;

    friend bool operator==(BitPattern32, BitPattern32) = default;
};

inline BitPattern32 to_bits(float x) noexcept { return {std::bit_cast<std::uint32_t>(x)}; }
inline float from_bits(BitPattern32 b) noexcept { return std::bit_cast<float>(b.raw); }
inline BitPattern32 to_bits(std::int32_t x) noexcept { return {std::bit_cast<std::uint32_t>(x)}; }
inline std::int32_t int_from_bits(BitPattern32 b) noexcept { return std::bit_cast<std::int32_t>(b.raw); }

/// Row-major 32-bit float tensor. Any bit pattern is a legal element.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape);
    DenseTensor(Shape shape, std::vector<float> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::vector<float>& values() noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    /// Same elements, new shape of equal element count.
    DenseTensor reshaped(Shape shape) const;

    /// Bitwise equality (NaN payloads and signed zeros included).
    bool bit_equal(const DenseTensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Fixed-point image of a dense tensor: code = x * 2^24 in a signed 32-bit word.
struct QuantTensor {
    static constexpr double kScale = 16777216.0; // 2^24
    static constexpr double kStep = 1.0 / kScale;
    static constexpr double kMin = -128.0;
    static constexpr double kMax = 127.0;

    Shape shape;
    std::vector<std::int32_t> codes;
};

/// Coordinate-format tensor. `indices` is n_nonzero x rank, row-major.
struct SparseTensor {
    Shape dense_shape;
    std::vector<std::uint32_t> indices;
    std::vector<float> values;

    std::size_t nnz() const noexcept { return values.size(); }
    std::size_t rank() const noexcept { return dense_shape.size(); }
};

/// Throws RangeExceeded (with the flat element index) when |x| >= 128 or x is NaN.
QuantTensor quantize(const DenseTensor& t);
DenseTensor dequantize(const QuantTensor& q);

std::int32_t quantize_scalar(float x);
float dequantize_scalar(std::int32_t code) noexcept;

SparseTensor to_coo(const DenseTensor& t);

/// Scatter into zeros in stored order. Out-of-range coordinates wrap modulo
/// their dimension; later entries overwrite earlier ones.
DenseTensor from_coo(const SparseTensor& s);

} // namespace bitfault
