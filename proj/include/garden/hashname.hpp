#pragma once

#include "garden/error.hpp"

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace garden {

// Digit alphabet for rendered digests. 32 symbols; e, o, t and u are omitted.
inline constexpr std::string_view base32_alphabet = "0123456789abcdfghijklmnpqrsvwxyz";

inline constexpr std::size_t digest_chars = 32;
inline constexpr std::size_t digest_bytes = 20;

GARDEN_DEFINE_ERROR(MalformedHashName, usage);
GARDEN_DEFINE_ERROR(WrongLength, usage);

// A package version's identity: 32-character base-32 digest of its build
// inputs plus the human-readable name-version label.
struct HashName {
    std::string digest; // exactly 32 chars over base32_alphabet
    std::string label;  // e.g. "gcc-4.6.1"

    std::string render() const { return digest + "-" + label; }

    auto operator<=>(const HashName&) const = default;
};

bool is_valid_digest(std::string_view s);
bool is_valid_label(std::string_view s);

// Splits "<digest>-<label>" at the dash following the 32 digest characters.
// Throws MalformedHashName on anything else.
HashName parse_hash_name(std::string_view text);

// True iff parse_hash_name would accept the token.
bool is_hash_name(std::string_view text);

// Renders 20 bytes, read as one big-endian unsigned integer, as exactly 32
// base-32 digits, most significant first.
std::string base32_encode(std::span<const std::uint8_t> bytes20);

// The build-time inputs a package hash commits to.
struct HashInputs {
    std::vector<std::uint8_t> recipe_bytes;
    std::vector<std::uint8_t> helper_bytes;
    std::string system;                  // platform tag, e.g. "x86_64-linux"
    std::vector<std::string> dep_hashes; // rendered forms, sorted, unique

    bool valid() const;
};

// Length-prefixed framing of the inputs: for each field in the fixed order
// (recipe_bytes, helper_bytes, system, dep_hashes...), an 8-byte big-endian
// byte-length followed by the field bytes.
std::vector<std::uint8_t> frame_hash_inputs(const HashInputs& inputs);

// SHA-256 over the framed inputs, truncated to its first 20 bytes and
// base-32 encoded.
std::string compute_package_hash(const HashInputs& inputs);

} // namespace garden
