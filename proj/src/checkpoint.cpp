#include "spae/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace spae {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'A', 'E'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        check(pos + n <= buf.size(), ErrorCode::Truncated, "checkpoint truncated");
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    float f32() {
        uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, Checkpoint::kVersion);
    put_u32(out, static_cast<uint32_t>(ckpt.spec_blob.size()));
    out.append(ckpt.spec_blob);
    put_u64(out, ckpt.seed);
    put_u64(out, ckpt.step);
    put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        put_u32(out, static_cast<uint32_t>(t.name.size()));
        out.append(t.name);
        out.push_back(static_cast<char>(t.dtype));
        out.push_back(static_cast<char>(t.dims.size()));
        uint64_t count = 1;
        for (uint32_t dim : t.dims) {
            put_u32(out, dim);
            count *= dim;
        }
        check(count == t.data.size(), ErrorCode::ShapeMismatch,
              "tensor '" + t.name + "' dims do not match payload");
        for (float f : t.data) put_f32(out, f);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r{bytes};
    check(r.bytes(4) == std::string(kMagic, 4), ErrorCode::BadMagic,
          "not a checkpoint file (bad magic)");
    const uint32_t version = r.u32();
    check(version == Checkpoint::kVersion, ErrorCode::VersionUnsupported,
          "unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    const uint32_t spec_len = r.u32();
    ckpt.spec_blob = r.bytes(spec_len);
    ckpt.seed = r.u64();
    ckpt.step = r.u64();
    const uint32_t n_tensors = r.u32();
    ckpt.tensors.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        TensorRecord t;
        const uint32_t name_len = r.u32();
        t.name = r.bytes(name_len);
        t.dtype = r.u8();
        check(t.dtype == 0, ErrorCode::VersionUnsupported,
              "unknown dtype code in tensor '" + t.name + "'");
        const uint8_t rank = r.u8();
        uint64_t count = 1;
        for (uint8_t k = 0; k < rank; ++k) {
            t.dims.push_back(r.u32());
            count *= t.dims.back();
        }
        t.data.resize(count);
        for (uint64_t k = 0; k < count; ++k) t.data[k] = r.f32();
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = encode_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        check(os.good(), ErrorCode::IoError, "cannot open '" + tmp + "' for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        check(os.good(), ErrorCode::IoError, "short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    check(!ec, ErrorCode::IoError, "cannot rename checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    // an unreadable checkpoint is a checkpoint error, not a data error
    check(is.good(), ErrorCode::Truncated, "cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

TensorRecord to_record(const std::string& name, const std::vector<int64_t>& dims,
                       const std::vector<real>& values) {
    TensorRecord t;
    t.name = name;
    for (int64_t d : dims) t.dims.push_back(static_cast<uint32_t>(d));
    if (t.dims.empty()) t.dims.push_back(static_cast<uint32_t>(values.size()));
    t.data.reserve(values.size());
    for (real v : values) t.data.push_back(static_cast<float>(v));
    return t;
}

void from_record(const TensorRecord& rec, const std::vector<int64_t>& want_dims,
                 std::vector<real>& out) {
    uint64_t want = 1;
    for (int64_t d : want_dims) want *= static_cast<uint64_t>(d);
    if (want_dims.empty()) want = out.size();
    check(rec.data.size() == want, ErrorCode::SpecMismatch,
          "tensor '" + rec.name + "' has wrong element count");
    out.resize(rec.data.size());
    for (size_t i = 0; i < rec.data.size(); ++i) out[i] = static_cast<real>(rec.data[i]);
}

} // namespace spae
