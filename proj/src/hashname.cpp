#include "garden/hashname.hpp"

#include <algorithm>
#include <array>

#include <openssl/evp.h>

namespace garden {

namespace {

bool in_alphabet(char c)
{
    return base32_alphabet.find(c) != std::string_view::npos;
}

bool label_head_char(char c)
{
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
           (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '+';
}

bool label_tail_char(char c)
{
    return label_head_char(c) || c == '-';
}

} // namespace

bool is_valid_digest(std::string_view s)
{
    return s.size() == digest_chars &&
           std::all_of(s.begin(), s.end(), in_alphabet);
}

bool is_valid_label(std::string_view s)
{
    if (s.empty() || !label_head_char(s[0]))
        return false;
    return std::all_of(s.begin() + 1, s.end(), label_tail_char);
}

HashName parse_hash_name(std::string_view text)
{
    if (text.size() < digest_chars + 2)
        throw MalformedHashName("malformed hash-name (too short): " + std::string(text));
    auto digest = text.substr(0, digest_chars);
    if (!is_valid_digest(digest))
        throw MalformedHashName("malformed hash-name (bad digest): " + std::string(text));
    if (text[digest_chars] != '-')
        throw MalformedHashName("malformed hash-name (missing '-' after digest): " +
                                std::string(text));
    auto label = text.substr(digest_chars + 1);
    if (!is_valid_label(label))
        throw MalformedHashName("malformed hash-name (bad label): " + std::string(text));
    return HashName{std::string(digest), std::string(label)};
}

bool is_hash_name(std::string_view text)
{
    return text.size() >= digest_chars + 2 &&
           is_valid_digest(text.substr(0, digest_chars)) &&
           text[digest_chars] == '-' &&
           is_valid_label(text.substr(digest_chars + 1));
}

std::string base32_encode(std::span<const std::uint8_t> bytes20)
{
    if (bytes20.size() != digest_bytes)
        throw WrongLength("base32_encode expects 20 bytes, got " +
                          std::to_string(bytes20.size()));
    // 160 bits exactly fill 32 five-bit digits; digit i covers bits
    // [5i, 5i+5) counted from the most significant end.
    std::string out(digest_chars, '0');
    for (std::size_t i = 0; i < digest_chars; ++i) {
        std::size_t bit = i * 5;
        std::size_t byte = bit / 8;
        std::size_t shift = bit % 8;
        unsigned v = static_cast<unsigned>(bytes20[byte]) << 8;
        if (byte + 1 < digest_bytes)
            v |= bytes20[byte + 1];
        unsigned digit = (v >> (11 - shift)) & 0x1f;
        out[i] = base32_alphabet[digit];
    }
    return out;
}

bool HashInputs::valid() const
{
    if (system.empty())
        return false;
    if (!std::is_sorted(dep_hashes.begin(), dep_hashes.end()))
        return false;
    return std::adjacent_find(dep_hashes.begin(), dep_hashes.end()) == dep_hashes.end();
}

namespace {

void append_framed(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> field)
{
    std::uint64_t len = field.size();
    for (int i = 7; i >= 0; --i)
        out.push_back(static_cast<std::uint8_t>(len >> (i * 8)));
    out.insert(out.end(), field.begin(), field.end());
}

std::span<const std::uint8_t> as_bytes(std::string_view s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

} // namespace

std::vector<std::uint8_t> frame_hash_inputs(const HashInputs& inputs)
{
    std::vector<std::uint8_t> out;
    append_framed(out, inputs.recipe_bytes);
    append_framed(out, inputs.helper_bytes);
    append_framed(out, as_bytes(inputs.system));
    for (const auto& dep : inputs.dep_hashes)
        append_framed(out, as_bytes(dep));
    return out;
}

std::string compute_package_hash(const HashInputs& inputs)
{
    auto framed = frame_hash_inputs(inputs);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int md_len = 0;
    if (EVP_Digest(framed.data(), framed.size(), md.data(), &md_len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest computation failed");
    return base32_encode(std::span<const std::uint8_t>(md.data(), digest_bytes));
}

} // namespace garden
