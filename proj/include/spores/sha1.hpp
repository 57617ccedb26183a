#pragma once

#include <array>
#include <cstdint>

#include "spores/bytes.hpp"

namespace spores {

using Sha1Digest = std::array<std::uint8_t, 20>;

Sha1Digest sha1(ByteView data);

// Incremental interface for hashing without concatenating buffers.
class Sha1 {
 public:
  Sha1();
  void update(ByteView data);
  Sha1Digest finish();

 private:
  void process(const std::uint8_t* block);

  std::uint32_t h_[5];
  std::uint8_t buf_[64];
  std::size_t buf_len_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace spores
