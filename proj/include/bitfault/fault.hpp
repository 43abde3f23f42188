#pragma once

#include "bitfault/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bitfault {

enum class FaultKind { BitFlip, StuckAtZero, StuckAtOne };
enum class TargetType { Weight, Output };

/// Representation the fault lands in. Quantized and sparse sites exist only
/// for layer outputs.
enum class SiteType { DenseFloat, QuantizedInt, SparseIndex };

enum class CaptureMode { FullTensor, Summary };

std::string_view to_string(FaultKind k);
std::string_view to_string(TargetType t);
std::string_view to_string(SiteType s);
std::string_view to_string(CaptureMode c);

// Parsers throw InvalidArgument on unknown names.
FaultKind parse_fault_kind(std::string_view s);
TargetType parse_target(std::string_view s);
SiteType parse_site(std::string_view s);
CaptureMode parse_capture(std::string_view s);

bool site_valid_for(SiteType site, TargetType target) noexcept;

using Coord = std::vector<std::size_t>;

/// One injection directive. element_indices[i] is a coordinate into the
/// target array (for SparseIndex: (entry_row, dim_column) into the COO index
/// array) and bit_positions[i] the bits faulted in that element.
struct Fault {
    std::string layer_name;
    TargetType target = TargetType::Output;
    SiteType site = SiteType::DenseFloat;
    std::vector<Coord> element_indices;
    std::vector<std::vector<int>> bit_positions;
    FaultKind kind = FaultKind::BitFlip;

    std::size_t bit_count() const noexcept;
};

struct Monitor {
    std::string layer_name;
    TargetType target = TargetType::Output;
    CaptureMode capture = CaptureMode::FullTensor;
};

using Injection = std::variant<Fault, Monitor>;

/// Per-tensor compiled faults: y = ((x & and) | or) ^ xor.
struct FaultMask {
    Shape shape;
    std::vector<BitPattern32> and_mask;
    std::vector<BitPattern32> or_mask;
    std::vector<BitPattern32> xor_mask;

    static FaultMask neutral(const Shape& shape);
    std::size_t size() const noexcept { return xor_mask.size(); }
};

/// Compile faults that all target the same (layer, target, site) tensor.
/// Throws IndexOutOfRange, ConflictingStuckAt or InvalidArgument.
FaultMask make_mask(std::span<const Fault> faults, const Shape& shape);

/// Adds one fault to a mask compiled for its tensor; same errors as make_mask
/// except the shared-target check.
void add_to_mask(FaultMask& m, const Fault& f);

/// One bit of one fault at flat element i. Throws IndexOutOfRange or
/// ConflictingStuckAt.
void add_mask_bit(FaultMask& m, std::size_t i, int bit, FaultKind kind);

/// Pure form: returns the masked copy. Throws ShapeMismatch.
std::vector<BitPattern32> apply_mask(std::span<const BitPattern32> bits, const FaultMask& m);

// In-place forms over any 32-bit element type; one pass over the tensor.
void apply_mask_in_place(std::span<float> values, const FaultMask& m);
void apply_mask_in_place(std::span<std::int32_t> values, const FaultMask& m);
void apply_mask_in_place(std::span<std::uint32_t> values, const FaultMask& m);

/// Masks only the first words.size() elements; for variable-length arrays
/// (COO index arrays) compiled against their maximum capacity.
void apply_mask_prefix(std::span<std::uint32_t> words, const FaultMask& m);

/// k = round(rate * n_params), half away from zero.
std::size_t fault_count(double rate, std::size_t n_params);

struct SampleRequest {
    double rate = 0.0;
    Shape shape;
    std::string layer;
    TargetType target = TargetType::Output;
    SiteType site = SiteType::DenseFloat;
    FaultKind kind = FaultKind::BitFlip;
    std::uint64_t seed = 0;
    int bit_lo = 0;
    int bit_hi = 31;
};

/// Draws round(rate * numel(shape)) distinct elements uniformly without
/// replacement, one uniform bit in [bit_lo, bit_hi] each. One Fault per
/// element, in ascending flat-index order.
std::vector<Fault> sample_faults(const SampleRequest& req);

std::size_t flatten(const Coord& coord, const Shape& shape);
Coord unflatten(std::size_t flat, const Shape& shape);

} // namespace bitfault
