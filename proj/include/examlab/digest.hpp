#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace examlab {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// `bytes` bytes from the system CSPRNG, hex encoded.
std::string random_hex(std::size_t bytes);

}  // namespace examlab
