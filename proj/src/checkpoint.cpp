#include "lavt/checkpoint.hpp"

#include <cstdio>
#include <cstring>

namespace lavt {

namespace {

constexpr char kMagic[4] = {'L', 'A', 'V', 'T'};
constexpr uint32_t kVersion = 1;

struct File {
    FILE* f = nullptr;
    explicit File(FILE* f_) : f(f_) {}
    ~File() {
        if (f) std::fclose(f);
    }
};

void write_u32(FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    LAVT_CHECK(std::fwrite(b, 1, 4, f) == 4, "checkpoint: write failed");
}

uint32_t read_u32(FILE* f) {
    unsigned char b[4];
    LAVT_CHECK(std::fread(b, 1, 4, f) == 4, "checkpoint: truncated file");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void Checkpoint::put(const std::string& name, Tensor t) {
    for (auto& e : entries_)
        if (e.first == name) {
            e.second = std::move(t);
            return;
        }
    entries_.emplace_back(name, std::move(t));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.first == name) return true;
    return false;
}

Tensor Checkpoint::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.first == name) return e.second;
    fail(strf("checkpoint: no tensor named '%s'", name.c_str()));
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    File file(std::fopen(path.c_str(), "wb"));
    LAVT_CHECK(file.f, "checkpoint: cannot open '%s' for writing", path.c_str());
    FILE* f = file.f;
    LAVT_CHECK(std::fwrite(kMagic, 1, 4, f) == 4, "checkpoint: write failed");
    write_u32(f, kVersion);
    write_u32(f, static_cast<uint32_t>(ckpt.entries().size()));
    for (const auto& [name, t] : ckpt.entries()) {
        write_u32(f, static_cast<uint32_t>(name.size()));
        LAVT_CHECK(std::fwrite(name.data(), 1, name.size(), f) == name.size(),
                   "checkpoint: write failed");
        write_u32(f, static_cast<uint32_t>(t.rank()));
        for (size_t d = 0; d < t.rank(); ++d) write_u32(f, static_cast<uint32_t>(t.dim(d)));
        size_t n = static_cast<size_t>(t.numel());
        // assumes a little-endian host, as does the format
        LAVT_CHECK(std::fwrite(t.data(), sizeof(float), n, f) == n, "checkpoint: write failed");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    File file(std::fopen(path.c_str(), "rb"));
    LAVT_CHECK(file.f, "checkpoint: cannot open '%s'", path.c_str());
    FILE* f = file.f;
    char magic[4];
    LAVT_CHECK(std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, kMagic, 4) == 0,
               "checkpoint: '%s' is not a LAVT tensor file", path.c_str());
    uint32_t version = read_u32(f);
    LAVT_CHECK(version == kVersion, "checkpoint: unsupported version %u", version);
    uint32_t count = read_u32(f);
    Checkpoint ckpt;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_u32(f);
        std::string name(name_len, '\0');
        LAVT_CHECK(std::fread(name.data(), 1, name_len, f) == name_len,
                   "checkpoint: truncated file");
        uint32_t rank = read_u32(f);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = read_u32(f);
        size_t n = static_cast<size_t>(shape_numel(shape));
        std::vector<float> data(n);
        LAVT_CHECK(std::fread(data.data(), sizeof(float), n, f) == n,
                   "checkpoint: truncated tensor '%s'", name.c_str());
        ckpt.put(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    return ckpt;
}

}  // namespace lavt
