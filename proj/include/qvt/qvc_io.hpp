#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qvt/checkpoint.hpp"

// QVC1 container:
//
//   [0, 4)        ASCII "QVC1"
//   [4, 12)       header length H, u64 little-endian
//   [12, 12 + H)  canonical JSON (sorted keys, no whitespace):
//                 {"meta":{...},"tensors":{name:{"nbytes":n,"offset":o,"shape":[...]}}}
//   [12 + H, ...) little-endian f32 payloads, lexicographic name order, no padding
//
// Offsets are relative to the end of the header.

namespace qvt {

inline constexpr char kQvcMagic[4] = {'Q', 'V', 'C', '1'};

std::vector<std::uint8_t> encode_qvc(const Checkpoint & ckpt);

// Throws FormatError naming the offending tensor where applicable.
Checkpoint decode_qvc(std::span<const std::uint8_t> bytes);

// The whole buffer is encoded before the file is opened.
void       save_checkpoint(const Checkpoint & ckpt, const std::filesystem::path & path);
Checkpoint load_checkpoint(const std::filesystem::path & path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path & path);

// FNV-1a 64 of a byte buffer rendered as 16 hex digits. Used for config and
// artifact fingerprints in reports.
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);
std::string fnv1a_hex(std::string_view text);

}  // namespace qvt
