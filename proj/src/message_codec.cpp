#include "tagkit/message_codec.hpp"

#include "tagkit/errors.hpp"

namespace tagkit {

void MessageSpec::validate() const {
    if (n_bits < 1 || n_bits > 63)
        throw ConfigError("n_bits must be in [1,63], got " + std::to_string(n_bits));
    if (repetition_factor < 1 || repetition_factor % 2 == 0)
        throw ConfigError("repetition_factor must be a positive odd integer, got " +
                          std::to_string(repetition_factor));
}

namespace {

void check_bits(const Bits& b, const char* what) {
    for (auto v : b)
        if (v > 1) throw RangeError(std::string(what) + ": bit values must be 0 or 1");
}

}  // namespace

Bits uid_to_bits(std::uint64_t uid, const MessageSpec& spec) {
    spec.validate();
    const std::uint64_t limit = std::uint64_t(1) << spec.n_bits;
    if (uid >= limit)
        throw RangeError("uid " + std::to_string(uid) + " out of range; maximum is " +
                         std::to_string(limit - 1));
    Bits out(spec.n_bits);
    for (int i = 0; i < spec.n_bits; ++i)
        out[i] = std::uint8_t((uid >> (spec.n_bits - 1 - i)) & 1u);
    return out;
}

std::uint64_t bits_to_uid(const Bits& bits) {
    if (bits.empty() || bits.size() > 63)
        throw RangeError("bit message length must be in [1,63], got " +
                         std::to_string(bits.size()));
    check_bits(bits, "bits_to_uid");
    std::uint64_t uid = 0;
    for (auto b : bits) uid = (uid << 1) | b;
    return uid;
}

Bits repetition_encode(const Bits& bits, const MessageSpec& spec) {
    spec.validate();
    if (int(bits.size()) != spec.n_bits)
        throw ShapeError("repetition_encode: expected " + std::to_string(spec.n_bits) +
                         " bits, got " + std::to_string(bits.size()));
    check_bits(bits, "repetition_encode");
    Bits out;
    out.reserve(bits.size() * spec.repetition_factor);
    for (auto b : bits)
        for (int k = 0; k < spec.repetition_factor; ++k) out.push_back(b);
    return out;
}

Bits repetition_decode(const Bits& payload, const MessageSpec& spec) {
    spec.validate();
    if (int(payload.size()) != spec.payload_bits())
        throw ShapeError("repetition_decode: expected " + std::to_string(spec.payload_bits()) +
                         " payload bits, got " + std::to_string(payload.size()));
    check_bits(payload, "repetition_decode");
    Bits out(spec.n_bits);
    const int k = spec.repetition_factor;
    for (int i = 0; i < spec.n_bits; ++i) {
        int ones = 0;
        for (int j = 0; j < k; ++j) ones += payload[std::size_t(i) * k + j];
        out[i] = std::uint8_t(ones * 2 > k);
    }
    return out;
}

double bit_accuracy(const Bits& a, const Bits& b) {
    if (a.size() != b.size())
        throw ShapeError("bit_accuracy: lengths differ, " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    if (a.empty()) throw DomainError("bit_accuracy: empty message");
    std::size_t match = 0;
    for (std::size_t i = 0; i < a.size(); ++i) match += (a[i] == b[i]);
    return double(match) / double(a.size());
}

double fmrr(const std::vector<Bits>& decoded, const std::vector<Bits>& truth) {
    if (decoded.size() != truth.size())
        throw ShapeError("fmrr: batch sizes differ, " + std::to_string(decoded.size()) + " vs " +
                         std::to_string(truth.size()));
    if (decoded.empty()) throw DomainError("fmrr: empty batch");
    std::size_t full = 0;
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        if (decoded[i].size() != truth[i].size())
            throw ShapeError("fmrr: message lengths differ at item " + std::to_string(i));
        full += (decoded[i] == truth[i]);
    }
    return double(full) / double(decoded.size());
}

std::string bits_to_string(const Bits& bits) {
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i) s[i] = bits[i] ? '1' : '0';
    return s;
}

Bits string_to_bits(const std::string& s) {
    Bits out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '0' && s[i] != '1')
            throw RangeError("bit string may contain only '0' and '1'");
        out[i] = std::uint8_t(s[i] == '1');
    }
    return out;
}

}  // namespace tagkit
