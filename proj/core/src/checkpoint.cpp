#include "irff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

IRFF_BEGIN_NAMESPACE

namespace {

static_assert(sizeof(float) == 4);

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put_le(v, 2); }
    void u32(std::uint32_t v) { put_le(v, 4); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > in_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t get_le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& entries) {
    Writer w;
    w.bytes("IRFF", 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff) throw UsageError("parameter name too long: " + e.name);
        if (e.tensor.rank() > 0xff) throw UsageError("tensor rank too large for checkpoint: " + e.name);
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (auto v : e.tensor.data()) w.f32(static_cast<float>(v));
    }
    return w.take();
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(4) != "IRFF") throw IoError("not a checkpoint: bad magic bytes");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.u32();
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor e;
        e.name = r.str(r.u16());
        const auto rank = r.u8();
        Shape shape(rank);
        for (auto& d : shape) d = r.u32();
        std::vector<real> data(shape_numel(shape));
        for (auto& v : data) v = static_cast<real>(r.f32());
        e.tensor = Tensor::from(std::move(shape), std::move(data));
        out.push_back(std::move(e));
    }
    if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    const auto bytes = encode_checkpoint(entries);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

void restore_into(const std::vector<NamedTensor>& loaded, std::vector<NamedTensor>& targets) {
    const auto n = std::min(loaded.size(), targets.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (loaded[i].name != targets[i].name) {
            throw ConfigError("checkpoint entry " + std::to_string(i) + " is '" + loaded[i].name +
                              "' but the model expects '" + targets[i].name + "'");
        }
        if (loaded[i].tensor.shape() != targets[i].tensor.shape()) {
            throw ConfigError("checkpoint parameter '" + loaded[i].name + "' has shape " +
                              shape_str(loaded[i].tensor.shape()) + ", model expects " +
                              shape_str(targets[i].tensor.shape()));
        }
    }
    if (loaded.size() != targets.size()) {
        const auto& name = loaded.size() > targets.size() ? loaded[n].name : targets[n].name;
        throw ConfigError("checkpoint has " + std::to_string(loaded.size()) + " parameters, model expects " +
                          std::to_string(targets.size()) + " (first unmatched: '" + name + "')");
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto src = loaded[i].tensor.data();
        auto dst = targets[i].tensor.mutable_data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

IRFF_END_NAMESPACE
