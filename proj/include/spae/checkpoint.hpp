#ifndef SPAE_CHECKPOINT_HPP
#define SPAE_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "spae/common.hpp"

namespace spae {

// One named tensor in the checkpoint table. Values are stored as 32-bit
// little-endian floats regardless of the engine scalar width.
struct TensorRecord {
    std::string name;
    uint8_t dtype = 0; // 0 = f32
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

/// Binary checkpoint: magic `SPAE`, little-endian, u32 version, a
/// length-prefixed UTF-8 spec blob, RNG seed, step counter, then the tensor
/// table. load(save(x)) is bit-exact.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;
    std::string spec_blob;
    uint64_t seed = 0;
    uint64_t step = 0;
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes next to `path` and renames into place, so failures never leave a
/// partially written checkpoint behind.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// f32 <-> engine-scalar bridges
TensorRecord to_record(const std::string& name, const std::vector<int64_t>& dims,
                       const std::vector<real>& values);
void from_record(const TensorRecord& rec, const std::vector<int64_t>& want_dims,
                 std::vector<real>& out);

} // namespace spae

#endif
