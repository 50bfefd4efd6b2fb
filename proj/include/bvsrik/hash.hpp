#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace bvsrik {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
/// 16 lowercase hex digits.
std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace bvsrik
