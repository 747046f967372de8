#ifndef TAGKIT_REGISTRY_HPP
#define TAGKIT_REGISTRY_HPP

// Provenance plumbing: a registry mapping UIDs to identities, tagging an
// image with its owner's UID, and verifying a suspect image against the
// registry — raising the mismatch alarm when the recovered owner and the
// claimed one disagree.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tagkit/model.hpp"

namespace tagkit {

struct RegistryRecord {
    std::uint64_t uid = 0;
    std::string identity_label;
    std::string created_at;           // ISO-8601 UTC
    std::string source_image_digest;  // hex content hash, "-" when none given

    bool operator==(const RegistryRecord&) const = default;
};

// One record per line: uid<TAB>label<TAB>timestamp<TAB>digest. Append-only;
// registration takes an advisory exclusive lock on the file so concurrent
// processes serialize, reads go lock-free.
class Registry {
public:
    // n_bits bounds the UID space at 2^n_bits; use the checkpoint's message
    // width. The file is created on first registration.
    Registry(std::string path, int n_bits);

    std::uint64_t register_identity(const std::string& label,
                                    const std::string& source_digest = "");

    // Parsed records in file order; a missing file reads as empty.
    std::vector<RegistryRecord> records() const;
    std::optional<RegistryRecord> find(std::uint64_t uid) const;

    const std::string& path() const { return path_; }
    int n_bits() const { return n_bits_; }

private:
    std::string path_;
    int n_bits_;
};

enum class VerifyStatus { Match, Mismatch, NoTag };

const char* verify_status_name(VerifyStatus s);  // MATCH / MISMATCH / NO_TAG

struct VerifyResult {
    VerifyStatus status = VerifyStatus::NoTag;
    std::optional<std::uint64_t> decoded_uid;         // absent below the tag threshold
    std::optional<std::string> registered_identity;   // absent when the uid is unknown
    std::optional<std::string> claimed_identity;      // echoed from the caller
    double bit_confidence = 0.0;                      // mean |2p-1| of the soft bits
};

// Soft bits hugging 0.5 mean no tag is present; an untrained or foreign
// decoder lands well under this, a matching one well over.
constexpr double kNoTagThreshold = 0.35;

// Embeds the registered uid into the image file and writes the tagged PNG.
// Returns PSNR(input, tagged) for the report line.
double tag_image(const TaggerModel& model, const Registry& reg, const std::string& image_path,
                 std::uint64_t uid, const std::string& out_path);

VerifyResult verify_image(const TaggerModel& model, const std::string& image_path,
                          const Registry& reg,
                          const std::optional<std::string>& claimed_identity = std::nullopt,
                          double no_tag_threshold = kNoTagThreshold);

}  // namespace tagkit

#endif
