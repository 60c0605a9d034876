#include "qvt/qvc_io.hpp"

#include <bit>
#include <cmath>
#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "qvt/errors.hpp"

namespace qvt {

using json = nlohmann::json;

namespace {

constexpr std::size_t kPrefixBytes = 12;

void put_u64_le(std::vector<std::uint8_t> & out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint64_t get_u64_le(const std::uint8_t * p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

void put_f32_le(std::vector<std::uint8_t> & out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
}

float get_f32_le(const std::uint8_t * p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

[[noreturn]] void fail(FormatError::Kind kind, const std::string & tensor, const std::string & what) {
    throw FormatError(kind, tensor, "QVC1 " + std::string(to_string(kind)) + ": " + what);
}

// Rejects duplicate keys in any JSON object. Duplicates directly under
// "tensors" are reported as DuplicateName for that tensor.
class DuplicateKeyGuard {
public:
    bool operator()(int /*depth*/, json::parse_event_t event, json & parsed) {
        switch (event) {
            case json::parse_event_t::object_start:
                frames_.push_back({pending_key_, {}});
                break;
            case json::parse_event_t::object_end:
                if (!frames_.empty()) frames_.pop_back();
                break;
            case json::parse_event_t::key: {
                const std::string key = parsed.get<std::string>();
                Frame & top = frames_.back();
                if (!top.keys.insert(key).second) {
                    if (frames_.size() == 2 && top.name == "tensors") {
                        fail(FormatError::Kind::DuplicateName, key, "tensor '" + key + "' appears twice in header");
                    }
                    fail(FormatError::Kind::BadHeader, {}, "duplicate key '" + key + "' in header");
                }
                pending_key_ = key;
                break;
            }
            default:
                break;
        }
        return true;
    }

private:
    struct Frame {
        std::string           name;
        std::set<std::string> keys;
    };
    std::vector<Frame> frames_;
    std::string        pending_key_;
};

std::int64_t require_int(const json & j, const char * field, const std::string & tensor) {
    if (!j.is_number_integer()) {
        fail(FormatError::Kind::BadHeader, tensor, "field '" + std::string(field) + "' of '" + tensor +
                                                       "' must be an integer");
    }
    return j.get<std::int64_t>();
}

}  // namespace

std::vector<std::uint8_t> encode_qvc(const Checkpoint & ckpt) {
    json meta = json::object();
    for (const auto & [k, v] : ckpt.meta()) {
        meta[k] = v;
    }
    json          tensors = json::object();
    std::uint64_t offset  = 0;
    for (const auto & [name, t] : ckpt) {
        const std::uint64_t nbytes = 4 * static_cast<std::uint64_t>(t.size());
        tensors[name]              = {{"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}};
        offset += nbytes;
    }
    const json        header_json = {{"meta", std::move(meta)}, {"tensors", std::move(tensors)}};
    const std::string header      = header_json.dump();

    std::vector<std::uint8_t> out;
    out.reserve(kPrefixBytes + header.size() + offset);
    out.insert(out.end(), std::begin(kQvcMagic), std::end(kQvcMagic));
    put_u64_le(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    for (const auto & [name, t] : ckpt) {
        for (float f : t.data()) {
            put_f32_le(out, f);
        }
    }
    return out;
}

Checkpoint decode_qvc(std::span<const std::uint8_t> bytes) {
    if (std::memcmp(bytes.data(), kQvcMagic, std::min<std::size_t>(bytes.size(), 4)) != 0) {
        fail(FormatError::Kind::BadMagic, {}, "file does not start with \"QVC1\"");
    }
    if (bytes.size() < kPrefixBytes) {
        fail(FormatError::Kind::Truncated, {}, "file shorter than the 12-byte prefix");
    }
    const std::uint64_t header_len = get_u64_le(bytes.data() + 4);
    if (header_len > bytes.size() - kPrefixBytes) {
        fail(FormatError::Kind::Truncated, {},
             "header length " + std::to_string(header_len) + " exceeds file size " + std::to_string(bytes.size()));
    }
    const auto header_begin = reinterpret_cast<const char *>(bytes.data() + kPrefixBytes);
    const std::string_view header_text(header_begin, static_cast<std::size_t>(header_len));

    json header;
    try {
        header = json::parse(header_text, DuplicateKeyGuard{});
    } catch (const json::exception & e) {
        fail(FormatError::Kind::BadHeader, {}, std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || !header.contains("meta") || !header.contains("tensors") ||
        !header["meta"].is_object() || !header["tensors"].is_object()) {
        fail(FormatError::Kind::BadHeader, {}, "header must be an object with \"meta\" and \"tensors\" objects");
    }

    Meta meta;
    for (const auto & [k, v] : header["meta"].items()) {
        if (!v.is_string()) {
            fail(FormatError::Kind::BadHeader, {}, "meta value for '" + k + "' is not a string");
        }
        meta.emplace(k, v.get<std::string>());
    }

    const std::span<const std::uint8_t> payload = bytes.subspan(kPrefixBytes + static_cast<std::size_t>(header_len));
    TensorMap                           tensors;
    std::uint64_t                       expected_offset = 0;
    for (const auto & [name, entry] : header["tensors"].items()) {
        if (name.empty()) {
            fail(FormatError::Kind::BadHeader, name, "empty tensor name");
        }
        if (!entry.is_object() || !entry.contains("shape") || !entry.contains("offset") ||
            !entry.contains("nbytes") || !entry["shape"].is_array()) {
            fail(FormatError::Kind::BadHeader, name, "tensor '" + name + "' needs shape, offset and nbytes");
        }
        Shape shape;
        for (const auto & d : entry["shape"]) {
            const std::int64_t dim = require_int(d, "shape", name);
            if (dim <= 0) {
                fail(FormatError::Kind::BadHeader, name, "tensor '" + name + "' has a non-positive dimension");
            }
            shape.push_back(dim);
        }
        std::int64_t numel = 0;
        try {
            numel = shape_numel(shape);
        } catch (const ValidationError & e) {
            fail(FormatError::Kind::BadHeader, name, "tensor '" + name + "': " + e.what());
        }
        const std::int64_t offset = require_int(entry["offset"], "offset", name);
        const std::int64_t nbytes = require_int(entry["nbytes"], "nbytes", name);
        if (nbytes != 4 * numel) {
            fail(FormatError::Kind::SizeMismatch, name,
                 "tensor '" + name + "' declares nbytes " + std::to_string(nbytes) + " for shape " +
                     shape_to_string(shape));
        }
        if (offset < 0 || static_cast<std::uint64_t>(offset) != expected_offset) {
            fail(FormatError::Kind::BadHeader, name,
                 "tensor '" + name + "' has offset " + std::to_string(offset) + ", expected " +
                     std::to_string(expected_offset));
        }
        if (expected_offset + static_cast<std::uint64_t>(nbytes) > payload.size()) {
            fail(FormatError::Kind::SizeMismatch, name,
                 "tensor '" + name + "' with shape " + shape_to_string(shape) + " needs " + std::to_string(nbytes) +
                     " bytes but only " + std::to_string(payload.size() - expected_offset) + " remain");
        }
        std::vector<float>    data(static_cast<std::size_t>(numel));
        const std::uint8_t *  src = payload.data() + expected_offset;
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = get_f32_le(src + 4 * i);
            if (!std::isfinite(data[i])) {
                fail(FormatError::Kind::NonFinite, name,
                     "tensor '" + name + "' has a non-finite value at flat index " + std::to_string(i));
            }
        }
        tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
        expected_offset += static_cast<std::uint64_t>(nbytes);
    }
    if (expected_offset != payload.size()) {
        fail(FormatError::Kind::SizeMismatch, {},
             "payload has " + std::to_string(payload.size() - expected_offset) + " trailing bytes");
    }
    return Checkpoint(std::move(tensors), std::move(meta));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(FormatError::Kind::Io, {}, "cannot open '" + path.string() + "' for reading");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(FormatError::Kind::Io, {}, "read error on '" + path.string() + "'");
    }
    return bytes;
}

void save_checkpoint(const Checkpoint & ckpt, const std::filesystem::path & path) {
    const auto    bytes = encode_qvc(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(FormatError::Kind::Io, {}, "cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(FormatError::Kind::Io, {}, "write error on '" + path.string() + "'");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path & path) {
    const auto bytes = read_file_bytes(path);
    return decode_qvc(bytes);
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string           out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

std::string fnv1a_hex(std::string_view text) {
    return fnv1a_hex(std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

}  // namespace qvt
