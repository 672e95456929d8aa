#ifndef ALT_SHA256_HPP
#define ALT_SHA256_HPP

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace alt {

using Sha256Digest = std::array<uint8_t, 32>;

Sha256Digest sha256(std::string_view data);
std::string sha256_hex(std::string_view data);
std::string to_hex(const Sha256Digest& d);

}  // namespace alt

#endif
