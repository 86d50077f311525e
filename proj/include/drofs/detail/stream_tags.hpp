#pragma once

#include <cstdint>

// Domain separation for RNG streams. One constant per consumer so distinct
// stages can never collide on a derived key. The ASCII spellings are only a
// debugging aid.

namespace drofs::detail {

inline constexpr std::uint64_t kSplitStreamTag = 0x73706c6974ULL;  // "split"
inline constexpr std::uint64_t kSynthStreamTag = 0x73796e7468ULL;  // "synth"
inline constexpr std::uint64_t kNoiseStreamTag = 0x6e6f697365ULL;  // "noise"
inline constexpr std::uint64_t kInitStreamTag = 0x696e6974ULL;     // "init"
inline constexpr std::uint64_t kPickStreamTag = 0x7069636bULL;     // "pick"
inline constexpr std::uint64_t kGradStreamTag = 0x67726164ULL;     // "grad"

}  // namespace drofs::detail
