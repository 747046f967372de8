#ifndef TAGKIT_MESSAGE_CODEC_HPP
#define TAGKIT_MESSAGE_CODEC_HPP

// UID <-> bit-message conversion, optional repetition coding, and
// message-level metrics. All pure functions.

#include <cstdint>
#include <string>
#include <vector>

namespace tagkit {

using Bits = std::vector<std::uint8_t>;  // elements are 0 or 1

struct MessageSpec {
    int n_bits = 20;
    int repetition_factor = 1;  // odd; 1 disables redundancy

    // physical payload length carried by the model
    int payload_bits() const { return n_bits * repetition_factor; }
    void validate() const;
};

// Most-significant bit first. n_bits is capped at 63 so every UID fits a
// uint64 without overflow games.
Bits uid_to_bits(std::uint64_t uid, const MessageSpec& spec);
std::uint64_t bits_to_uid(const Bits& bits);

// Each bit repeated k times contiguously; decode is per-group majority vote.
Bits repetition_encode(const Bits& bits, const MessageSpec& spec);
Bits repetition_decode(const Bits& payload, const MessageSpec& spec);

double bit_accuracy(const Bits& a, const Bits& b);

// Full message retrieval rate: fraction of batch items with every bit equal.
double fmrr(const std::vector<Bits>& decoded, const std::vector<Bits>& truth);

// '0'/'1' string form used by the CLI and the registry.
std::string bits_to_string(const Bits& bits);
Bits string_to_bits(const std::string& s);

}  // namespace tagkit

#endif
