#include "bitfault/fault.hpp"

#include "bitfault/error.hpp"
#include "bitfault/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

namespace bitfault {

std::string_view to_string(FaultKind k) {
    switch (k) {
    case FaultKind::BitFlip: return "bit_flip";
    case FaultKind::StuckAtZero: return "stuck_at_0";
    case FaultKind::StuckAtOne: return "stuck_at_1";
    }
    return "?";
}

std::string_view to_string(TargetType t) {
    return t == TargetType::Weight ? "weight" : "output";
}

std::string_view to_string(SiteType s) {
    switch (s) {
    case SiteType::DenseFloat: return "dense";
    case SiteType::QuantizedInt: return "quantized";
    case SiteType::SparseIndex: return "sparse_index";
    }
    return "?";
}

std::string_view to_string(CaptureMode c) {
    return c == CaptureMode::FullTensor ? "full" : "summary";
}

FaultKind parse_fault_kind(std::string_view s) {
    for (auto k : {FaultKind::BitFlip, FaultKind::StuckAtZero, FaultKind::StuckAtOne}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown fault kind '" + std::string(s) + "'");
}

TargetType parse_target(std::string_view s) {
    for (auto t : {TargetType::Weight, TargetType::Output}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown target '" + std::string(s) + "'");
}

SiteType parse_site(std::string_view s) {
    for (auto t : {SiteType::DenseFloat, SiteType::QuantizedInt, SiteType::SparseIndex}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown site '" + std::string(s) + "'");
}

CaptureMode parse_capture(std::string_view s) {
    for (auto c : {CaptureMode::FullTensor, CaptureMode::Summary}) {
        if (to_string(c) == s) {
            return c;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown capture mode '" + std::string(s) + "'");
}

bool site_valid_for(SiteType site, TargetType target) noexcept {
    return site == SiteType::DenseFloat || target == TargetType::Output;
}

std::size_t Fault::bit_count() const noexcept {
    std::size_t n = 0;
    for (const auto& b : bit_positions) {
        n += b.size();
    }
    return n;
}

std::size_t flatten(const Coord& coord, const Shape& shape) {
    if (coord.size() != shape.size()) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "coordinate rank " + std::to_string(coord.size()) + " vs shape " + shape_to_string(shape));
    }
    std::size_t flat = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (coord[d] >= shape[d]) {
            throw Error(ErrorCode::IndexOutOfRange, "coordinate component " + std::to_string(coord[d]) +
                                                        " outside shape " + shape_to_string(shape));
        }
        flat = flat * shape[d] + coord[d];
    }
    return flat;
}

Coord unflatten(std::size_t flat, const Shape& shape) {
    Coord c(shape.size());
    for (std::size_t d = shape.size(); d-- > 0;) {
        c[d] = flat % shape[d];
        flat /= shape[d];
    }
    return c;
}

FaultMask FaultMask::neutral(const Shape& shape) {
    const std::size_t n = numel(shape);
    return FaultMask{shape, std::vector<BitPattern32>(n, BitPattern32{0xFFFFFFFFu}),
                     std::vector<BitPattern32>(n), std::vector<BitPattern32>(n)};
}

void add_mask_bit(FaultMask& m, std::size_t i, int bit, FaultKind kind) {
    if (bit < 0 || bit > 31) {
        throw Error(ErrorCode::IndexOutOfRange, "bit position " + std::to_string(bit));
    }
    const std::uint32_t b = 1u << bit;
    switch (kind) {
    case FaultKind::BitFlip:
        m.xor_mask[i].raw |= b;
        break;
    case FaultKind::StuckAtOne:
        if ((m.and_mask[i].raw & b) == 0) {
            throw Error(ErrorCode::ConflictingStuckAt, "element " + std::to_string(i) + " bit " + std::to_string(bit));
        }
        m.or_mask[i].raw |= b;
        break;
    case FaultKind::StuckAtZero:
        if ((m.or_mask[i].raw & b) != 0) {
            throw Error(ErrorCode::ConflictingStuckAt, "element " + std::to_string(i) + " bit " + std::to_string(bit));
        }
        m.and_mask[i].raw &= ~b;
        break;
    }
}

void add_to_mask(FaultMask& m, const Fault& f) {
    if (f.element_indices.size() != f.bit_positions.size()) {
        throw Error(ErrorCode::InvalidArgument, "one bit list is required per element");
    }
    for (std::size_t e = 0; e < f.element_indices.size(); ++e) {
        const std::size_t i = flatten(f.element_indices[e], m.shape);
        for (int bit : f.bit_positions[e]) {
            add_mask_bit(m, i, bit, f.kind);
        }
    }
}

FaultMask make_mask(std::span<const Fault> faults, const Shape& shape) {
    FaultMask m = FaultMask::neutral(shape);
    for (const Fault& f : faults) {
        const Fault& first = faults.front();
        if (f.layer_name != first.layer_name || f.target != first.target || f.site != first.site) {
            throw Error(ErrorCode::InvalidArgument, "faults in one mask must share layer, target and site");
        }
        add_to_mask(m, f);
    }
    return m;
}

namespace {

template <class T>
inline void mask_words(T* words, std::size_t n, const FaultMask& m) {
    static_assert(sizeof(T) == 4);
    const BitPattern32* a = m.and_mask.data();
    const BitPattern32* o = m.or_mask.data();
    const BitPattern32* x = m.xor_mask.data();
    for (std::size_t i = 0; i < n; ++i) {
        const auto w = std::bit_cast<std::uint32_t>(words[i]);
        words[i] = std::bit_cast<T>(((w & a[i].raw) | o[i].raw) ^ x[i].raw);
    }
}

template <class T>
void apply_exact(std::span<T> values, const FaultMask& m) {
    if (values.size() != m.size()) {
        throw Error(ErrorCode::ShapeMismatch, "mask covers " + std::to_string(m.size()) + " elements, tensor has " +
                                                  std::to_string(values.size()));
    }
    mask_words(values.data(), values.size(), m);
}

} // namespace

std::vector<BitPattern32> apply_mask(std::span<const BitPattern32> bits, const FaultMask& m) {
    if (bits.size() != m.size()) {
        throw Error(ErrorCode::ShapeMismatch, "mask/tensor size mismatch");
    }
    std::vector<BitPattern32> out(bits.begin(), bits.end());
    mask_words(out.data(), out.size(), m);
    return out;
}

void apply_mask_in_place(std::span<float> values, const FaultMask& m) { apply_exact(values, m); }
void apply_mask_in_place(std::span<std::int32_t> values, const FaultMask& m) { apply_exact(values, m); }
void apply_mask_in_place(std::span<std::uint32_t> values, const FaultMask& m) { apply_exact(values, m); }

void apply_mask_prefix(std::span<std::uint32_t> words, const FaultMask& m) {
    if (words.size() > m.size()) {
        throw Error(ErrorCode::ShapeMismatch, "array longer than mask capacity");
    }
    mask_words(words.data(), words.size(), m);
}

std::size_t fault_count(double rate, std::size_t n_params) {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n_params)));
}

std::vector<Fault> sample_faults(const SampleRequest& req) {
    if (!(req.rate >= 0.0 && req.rate <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fault rate must lie in [0, 1]");
    }
    if (req.bit_lo < 0 || req.bit_hi > 31 || req.bit_lo > req.bit_hi) {
        throw Error(ErrorCode::InvalidArgument, "bit range must satisfy 0 <= lo <= hi <= 31");
    }
    if (!site_valid_for(req.site, req.target)) {
        throw Error(ErrorCode::InvalidSite, std::string(to_string(req.site)) + " site needs an output target");
    }
    const std::size_t n = numel(req.shape);
    const std::size_t k = fault_count(req.rate, n);
    SplitMix64 rng(req.seed);

    // Floyd's algorithm: k distinct values from [0, n) in O(k).
    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    if (k == n) {
        for (std::size_t i = 0; i < n; ++i) {
            chosen.push_back(i);
        }
    } else {
        std::unordered_set<std::size_t> seen;
        seen.reserve(k * 2);
        for (std::size_t j = n - k; j < n; ++j) {
            const std::size_t t = rng.below(j + 1);
            const std::size_t pick = seen.insert(t).second ? t : j;
            if (pick == j) {
                seen.insert(j);
            }
            chosen.push_back(pick);
        }
        std::sort(chosen.begin(), chosen.end());
    }

    const auto span = static_cast<std::uint64_t>(req.bit_hi - req.bit_lo + 1);
    std::vector<Fault> faults;
    faults.reserve(k);
    for (std::size_t flat : chosen) {
        Fault f;
        f.layer_name = req.layer;
        f.target = req.target;
        f.site = req.site;
        f.kind = req.kind;
        f.element_indices.push_back(unflatten(flat, req.shape));
        f.bit_positions.push_back({req.bit_lo + static_cast<int>(rng.below(span))});
        faults.push_back(std::move(f));
    }
    return faults;
}

} // namespace bitfault
