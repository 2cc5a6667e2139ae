#include "lagda/rng.hpp"

#include <array>

namespace lagda {

Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t index) {
  const auto tag = static_cast<std::uint64_t>(stream);
  std::array<std::uint32_t, 6> words{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(tag),  static_cast<std::uint32_t>(tag >> 32),
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

}  // namespace lagda
