#include "tagkit/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "tagkit/errors.hpp"

namespace tagkit {

namespace {

constexpr char kMagic[] = "TAGCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= std::uint64_t(static_cast<unsigned char>(data[i]));
        h *= 0x100000001b3ULL;
    }
    return h;
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

// Cursor over a loaded file; every read checks the remaining length so a
// truncated blob fails cleanly instead of reading garbage.
struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("truncated parameter blob");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

std::string checked_body(const std::string& path) {
    std::string buf = read_file(path);
    if (buf.size() < kMagicLen + 8 || buf.compare(0, kMagicLen, kMagic) != 0)
        throw CheckpointError(path + " is not a parameter blob");
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= std::uint64_t(static_cast<unsigned char>(buf[buf.size() - 8 + i])) << (8 * i);
    if (fnv1a(buf.data(), buf.size() - 8) != stored)
        throw CheckpointError(path + " failed its integrity check");
    buf.resize(buf.size() - 8);
    return buf;
}

}  // namespace

void save_param_blob(const std::string& path, const std::string& meta_json,
                     const std::vector<const ParamSet*>& sets) {
    std::string buf(kMagic, kMagicLen);
    put_u32(buf, std::uint32_t(meta_json.size()));
    buf += meta_json;
    std::vector<const Param*> ps;
    for (const ParamSet* s : sets)
        for (const Param* p : s->all()) ps.push_back(p);
    put_u32(buf, std::uint32_t(ps.size()));
    for (const Param* p : ps) {
        put_u32(buf, std::uint32_t(p->name.size()));
        buf += p->name;
        put_u64(buf, p->value.size());
        std::size_t off = buf.size();
        buf.resize(off + p->value.size() * 8);
        std::memcpy(&buf[off], p->value.data(), p->value.size() * 8);
    }
    put_u64(buf, fnv1a(buf.data(), buf.size()));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw IoError("short write to " + path);
}

void save_param_blob(const std::string& path, const std::string& meta_json,
                     const ParamSet& params) {
    save_param_blob(path, meta_json, std::vector<const ParamSet*>{&params});
}

std::string load_param_blob(const std::string& path, const std::vector<ParamSet*>& sets) {
    std::string buf = checked_body(path);
    Reader r{buf, kMagicLen};
    std::string meta = r.str(r.u32());
    std::uint32_t n = r.u32();
    std::size_t declared = 0;
    for (ParamSet* s : sets) declared += s->all().size();
    if (n != declared)
        throw ShapeError(path + " holds " + std::to_string(n) + " parameters, expected " +
                         std::to_string(declared));
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str(r.u32());
        std::uint64_t count = r.u64();
        Param* p = nullptr;
        for (ParamSet* s : sets)
            if (s->has(name)) { p = &s->get(name); break; }
        if (!p) throw ShapeError(path + " has unknown parameter " + name);
        if (count != p->value.size())
            throw ShapeError(path + ": " + name + " holds " + std::to_string(count) +
                             " values, expected " + std::to_string(p->value.size()));
        r.need(count * 8);
        std::memcpy(p->value.data(), buf.data() + r.pos, count * 8);
        r.pos += count * 8;
    }
    return meta;
}

std::string load_param_blob(const std::string& path, ParamSet& params) {
    return load_param_blob(path, std::vector<ParamSet*>{&params});
}

std::string peek_param_blob_meta(const std::string& path) {
    std::string buf = checked_body(path);
    Reader r{buf, kMagicLen};
    return r.str(r.u32());
}

}  // namespace tagkit
