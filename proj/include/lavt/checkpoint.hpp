#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lavt/tensor.hpp"

namespace lavt {

// Named-tensor container preserving insertion order.
class Checkpoint {
   public:
    void put(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    Tensor get(const std::string& name) const;  // throws if missing
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

   private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

// Flat little-endian binary: magic "LAVT", version u32, count u32, then per
// tensor: name length u32, UTF-8 name, rank u32, extents u32 each, raw f32.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lavt
