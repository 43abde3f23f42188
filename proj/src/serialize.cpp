#include "bitfault/serialize.hpp"

#include "bitfault/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bitfault {
namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'L', 'T', '1'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void header(DType tag, const Shape& shape) {
        out_.insert(out_.end(), std::begin(kMagic), std::end(kMagic));
        u32(static_cast<std::uint32_t>(tag));
        u32(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) {
            u64(d);
        }
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        }
        pos_ += 8;
        return v;
    }
    void magic() {
        need(4);
        if (std::memcmp(in_.data(), kMagic, 4) != 0) {
            throw Error(ErrorCode::FormatError, "bad tensor container magic");
        }
        pos_ += 4;
    }
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw Error(ErrorCode::FormatError, "truncated tensor container");
        }
    }
    bool at_end() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

Shape read_shape(Reader& r) {
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) {
        d = static_cast<std::size_t>(r.u64());
    }
    return shape;
}

} // namespace

std::vector<std::uint8_t> encode(const DenseTensor& t) {
    Writer w;
    w.header(DType::F32, t.shape());
    for (float x : t.data()) {
        w.u32(std::bit_cast<std::uint32_t>(x));
    }
    return w.take();
}

std::vector<std::uint8_t> encode(const QuantTensor& t) {
    Writer w;
    w.header(DType::I32, t.shape);
    for (auto c : t.codes) {
        w.u32(std::bit_cast<std::uint32_t>(c));
    }
    return w.take();
}

std::vector<std::uint8_t> encode(const SparseTensor& t) {
    Writer w;
    w.header(DType::Coo, t.dense_shape);
    w.u64(t.nnz());
    for (auto i : t.indices) {
        w.u32(i);
    }
    for (float v : t.values) {
        w.u32(std::bit_cast<std::uint32_t>(v));
    }
    return w.take();
}

AnyTensor decode(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.magic();
    const std::uint32_t tag = r.u32();
    Shape shape = read_shape(r);
    const std::size_t n = numel(shape);
    AnyTensor result;
    switch (static_cast<DType>(tag)) {
    case DType::F32: {
        r.need(n * 4);
        std::vector<float> data(n);
        for (auto& x : data) {
            x = std::bit_cast<float>(r.u32());
        }
        result = DenseTensor(std::move(shape), std::move(data));
        break;
    }
    case DType::I32: {
        r.need(n * 4);
        QuantTensor q{std::move(shape), std::vector<std::int32_t>(n)};
        for (auto& c : q.codes) {
            c = std::bit_cast<std::int32_t>(r.u32());
        }
        result = std::move(q);
        break;
    }
    case DType::Coo: {
        SparseTensor s;
        s.dense_shape = std::move(shape);
        const std::uint64_t nnz = r.u64();
        if (nnz > bytes.size()) {
            throw Error(ErrorCode::FormatError, "nnz larger than container");
        }
        r.need(nnz * (s.rank() + 1) * 4);
        s.indices.resize(nnz * s.rank());
        for (auto& i : s.indices) {
            i = r.u32();
        }
        s.values.resize(nnz);
        for (auto& v : s.values) {
            v = std::bit_cast<float>(r.u32());
        }
        result = std::move(s);
        break;
    }
    default:
        throw Error(ErrorCode::FormatError, "unknown dtype tag " + std::to_string(tag));
    }
    if (!r.at_end()) {
        throw Error(ErrorCode::FormatError, "trailing bytes after tensor payload");
    }
    return result;
}

DenseTensor decode_dense(std::span<const std::uint8_t> bytes) {
    auto any = decode(bytes);
    if (auto* t = std::get_if<DenseTensor>(&any)) {
        return std::move(*t);
    }
    throw Error(ErrorCode::FormatError, "expected an f32 tensor");
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace bitfault
