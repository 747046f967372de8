#include "tagkit/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tagkit/errors.hpp"
#include "tagkit/image_io.hpp"
#include "tagkit/message_codec.hpp"
#include "tagkit/metrics.hpp"

namespace tagkit {

namespace fs = std::filesystem;

namespace {

std::string utc_now_iso8601() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<RegistryRecord> parse_registry(const std::string& path, const std::string& text) {
    std::vector<RegistryRecord> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::uint64_t prev = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 4)
            throw ProvenanceError(path + ":" + std::to_string(lineno) + ": expected 4 fields, got " +
                                  std::to_string(fields.size()));
        RegistryRecord r;
        try {
            std::size_t used = 0;
            r.uid = std::stoull(fields[0], &used);
            if (used != fields[0].size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw ProvenanceError(path + ":" + std::to_string(lineno) + ": bad uid '" + fields[0] +
                                  "'");
        }
        if (!out.empty() && r.uid <= prev)
            throw ProvenanceError(path + ":" + std::to_string(lineno) +
                                  ": uids must increase strictly (" + std::to_string(r.uid) +
                                  " after " + std::to_string(prev) + ")");
        prev = r.uid;
        r.identity_label = fields[1];
        r.created_at = fields[2];
        r.source_image_digest = fields[3];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

Registry::Registry(std::string path, int n_bits) : path_(std::move(path)), n_bits_(n_bits) {
    if (path_.empty()) throw ConfigError("registry path is empty");
    if (n_bits_ < 1 || n_bits_ > 63)
        throw ConfigError("registry uid width must be in [1,63], got " + std::to_string(n_bits_));
}

std::vector<RegistryRecord> Registry::records() const {
    std::ifstream f(path_, std::ios::binary);
    if (!f) {
        if (!fs::exists(path_)) return {};
        throw IoError("cannot read registry " + path_);
    }
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_registry(path_, text);
}

std::optional<RegistryRecord> Registry::find(std::uint64_t uid) const {
    for (const RegistryRecord& r : records())
        if (r.uid == uid) return r;
    return std::nullopt;
}

std::uint64_t Registry::register_identity(const std::string& label,
                                          const std::string& source_digest) {
    if (label.empty()) throw ConfigError("identity label is empty");
    if (label.find('\t') != std::string::npos || label.find('\n') != std::string::npos)
        throw ConfigError("identity label may not contain tabs or newlines");
    std::string digest = source_digest.empty() ? "-" : source_digest;
    if (digest.find('\t') != std::string::npos || digest.find('\n') != std::string::npos)
        throw ConfigError("digest may not contain tabs or newlines");

    int fd = ::open(path_.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd < 0) throw IoError("cannot open registry " + path_ + ": " + std::strerror(errno));
    if (::flock(fd, LOCK_EX) != 0) {
        int e = errno;
        ::close(fd);
        throw IoError("cannot lock registry " + path_ + ": " + std::strerror(e));
    }

    try {
        std::string text;
        char buf[4096];
        ssize_t n;
        while ((n = ::read(fd, buf, sizeof buf)) > 0) text.append(buf, std::size_t(n));
        if (n < 0) throw IoError("cannot read registry " + path_ + ": " + std::strerror(errno));

        std::vector<RegistryRecord> existing = parse_registry(path_, text);
        std::uint64_t uid = existing.empty() ? 0 : existing.back().uid + 1;
        std::uint64_t capacity = std::uint64_t(1) << n_bits_;
        if (uid >= capacity)
            throw CapacityError("registry " + path_ + " holds all " + std::to_string(capacity) +
                                " uids expressible in " + std::to_string(n_bits_) + " bits");

        std::string line = std::to_string(uid) + "\t" + label + "\t" + utc_now_iso8601() + "\t" +
                           digest + "\n";
        if (::write(fd, line.data(), line.size()) != ssize_t(line.size()))
            throw IoError("cannot append to registry " + path_ + ": " + std::strerror(errno));
        ::close(fd);  // releases the lock
        return uid;
    } catch (...) {
        ::close(fd);
        throw;
    }
}

const char* verify_status_name(VerifyStatus s) {
    switch (s) {
        case VerifyStatus::Match: return "MATCH";
        case VerifyStatus::Mismatch: return "MISMATCH";
        case VerifyStatus::NoTag: return "NO_TAG";
    }
    return "?";
}

double tag_image(const TaggerModel& model, const Registry& reg, const std::string& image_path,
                 std::uint64_t uid, const std::string& out_path) {
    if (!reg.find(uid))
        throw ProvenanceError("uid " + std::to_string(uid) + " is not registered in " +
                              reg.path());
    Tensor image = load_image(image_path);
    const ModelConfig& mc = model.config();
    const Shape& s = image.shape();
    if (s.h != mc.image_size || s.w != mc.image_size)
        throw ShapeError(image_path + " is " + std::to_string(s.w) + "x" + std::to_string(s.h) +
                         " but the checkpoint tags " + std::to_string(mc.image_size) + "px images");
    Bits bits = uid_to_bits(uid, model.message_spec());
    Tensor tagged =
        model.encode_image(image, bits, default_mask(mc.image_size, MaskKind::Uniform));
    save_png(out_path, tagged);
    return psnr(image, tagged);
}

VerifyResult verify_image(const TaggerModel& model, const std::string& image_path,
                          const Registry& reg,
                          const std::optional<std::string>& claimed_identity,
                          double no_tag_threshold) {
    if (!(no_tag_threshold >= 0.0 && no_tag_threshold <= 1.0))
        throw ConfigError("no-tag threshold must lie in [0,1]");
    if (!fs::exists(reg.path())) throw IoError("cannot read registry " + reg.path());

    Tensor image = load_image(image_path);
    const ModelConfig& mc = model.config();
    const Shape& s = image.shape();
    if (s.h != mc.image_size || s.w != mc.image_size)
        throw ShapeError(image_path + " is " + std::to_string(s.w) + "x" + std::to_string(s.h) +
                         " but the checkpoint reads " + std::to_string(mc.image_size) +
                         "px images");

    std::vector<double> soft = model.decode_soft(image);
    double conf = 0.0;
    for (double p : soft) conf += std::abs(2.0 * p - 1.0);
    conf /= double(soft.size());

    VerifyResult res;
    res.bit_confidence = conf;
    res.claimed_identity = claimed_identity;
    if (conf < no_tag_threshold) {
        res.status = VerifyStatus::NoTag;
        return res;
    }

    Bits bits = TaggerModel::hard_decision(soft, model.message_spec());
    res.decoded_uid = bits_to_uid(bits);
    std::optional<RegistryRecord> rec = reg.find(*res.decoded_uid);
    if (!rec) {
        res.status = VerifyStatus::Mismatch;  // a tag nobody owns: alarm
        return res;
    }
    res.registered_identity = rec->identity_label;
    res.status = (!claimed_identity || *claimed_identity == rec->identity_label)
                     ? VerifyStatus::Match
                     : VerifyStatus::Mismatch;
    return res;
}

}  // namespace tagkit
