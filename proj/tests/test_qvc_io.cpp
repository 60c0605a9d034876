#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "qvt/errors.hpp"
#include "qvt/qvc_io.hpp"
#include "test_util.hpp"

using namespace qvt;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

// QVC1 file assembled by hand: magic, u64 LE length, header text, payload.
std::vector<std::uint8_t> assemble(std::string_view header, std::initializer_list<std::uint8_t> payload) {
    std::vector<std::uint8_t> out = bytes_of("QVC1");
    std::uint64_t             n   = header.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

constexpr std::string_view kGoldenHeader = R"({"meta":{"k":"v"},"tensors":{"a":{"nbytes":8,"offset":0,"shape":[2]}}})";

// Tensor "a" = {1.0, -2.0} with meta {"k": "v"}, written out byte by byte.
const std::vector<std::uint8_t> kGolden = [] {
    std::vector<std::uint8_t> b = {'Q', 'V', 'C', '1', 70, 0, 0, 0, 0, 0, 0, 0};
    b.insert(b.end(), kGoldenHeader.begin(), kGoldenHeader.end());
    for (std::uint8_t x : {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0}) b.push_back(x);
    return b;
}();

FormatError::Kind kind_of(const std::vector<std::uint8_t> & bytes, std::string * tensor = nullptr) {
    try {
        decode_qvc(bytes);
    } catch (const FormatError & e) {
        if (tensor) *tensor = e.tensor();
        return e.kind();
    }
    ADD_FAILURE() << "decode succeeded";
    return FormatError::Kind::Io;
}

}  // namespace

TEST(Qvc, GoldenHeaderLength) { EXPECT_EQ(kGoldenHeader.size(), 70u); }

TEST(Qvc, EncodesGoldenBytes) {
    const Checkpoint ck(TensorMap{{"a", Tensor({2}, {1.0f, -2.0f})}}, Meta{{"k", "v"}});
    EXPECT_EQ(encode_qvc(ck), kGolden);
}

TEST(Qvc, DecodesGoldenBytes) {
    const Checkpoint ck = decode_qvc(kGolden);
    ASSERT_TRUE(ck.contains("a"));
    EXPECT_EQ(ck.at("a").shape(), (Shape{2}));
    EXPECT_EQ(ck.at("a")[0], 1.0f);
    EXPECT_EQ(ck.at("a")[1], -2.0f);
    EXPECT_EQ(ck.meta_or("k"), "v");
}

TEST(Qvc, CommittedGoldenFileMatchesLiteral) {
    const auto       bytes = read_file_bytes(std::filesystem::path(QVT_TEST_DATA_DIR) / "golden_small.qvc");
    EXPECT_EQ(bytes, kGolden);
}

TEST(Qvc, FileSizeIsHeaderPlusPayload) {
    // {"meta":{},"tensors":{"w":{"nbytes":16,"offset":0,"shape":[2,2]}}} is 66 bytes.
    const auto dir = testutil::scratch_dir("qvc-size");
    save_checkpoint(Checkpoint(TensorMap{{"w", Tensor({2, 2}, {1, 2, 3, 4})}}), dir / "w.qvc");
    EXPECT_EQ(std::filesystem::file_size(dir / "w.qvc"), 12u + 66u + 16u);
}

TEST(Qvc, RoundTripIsBitwise) {
    Rng       rng(1);
    TensorMap m;
    m.emplace("z.bias", testutil::random_tensor({5}, rng));
    m.emplace("a.weight", testutil::random_tensor({3, 4}, rng));
    m.emplace("special", Tensor({4}, {-0.0f, std::numeric_limits<float>::denorm_min(),
                                      std::numeric_limits<float>::max(), -std::numeric_limits<float>::min()}));
    const Checkpoint ck(std::move(m), Meta{{"kind", "checkpoint"}, {"unicode", "\xc3\xa9t\xc3\xa9"}});
    const auto       bytes = encode_qvc(ck);
    EXPECT_TRUE(decode_qvc(bytes).bitwise_equal(ck));
    EXPECT_EQ(encode_qvc(decode_qvc(bytes)), bytes);
}

TEST(Qvc, PayloadInLexicographicOrder) {
    const Checkpoint ck(TensorMap{{"b", Tensor({1}, {2.0f})}, {"a", Tensor({1}, {1.0f})}});
    const auto       bytes = encode_qvc(ck);
    float            first, second;
    std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
    std::memcpy(&second, bytes.data() + bytes.size() - 4, 4);
    if constexpr (std::endian::native == std::endian::little) {
        EXPECT_EQ(first, 1.0f);
        EXPECT_EQ(second, 2.0f);
    }
}

TEST(Qvc, BadMagic) {
    auto b = kGolden;
    b[3]   = '2';
    EXPECT_EQ(kind_of(b), FormatError::Kind::BadMagic);
    EXPECT_EQ(kind_of(bytes_of("PK")), FormatError::Kind::BadMagic);
}

TEST(Qvc, Truncated) {
    EXPECT_EQ(kind_of(bytes_of("QVC1\x05")), FormatError::Kind::Truncated);
    auto b = kGolden;
    b[4]   = 200;
    EXPECT_EQ(kind_of(b), FormatError::Kind::Truncated);
}

TEST(Qvc, BadHeaderJson) {
    EXPECT_EQ(kind_of(assemble("{not json", {})), FormatError::Kind::BadHeader);
    EXPECT_EQ(kind_of(assemble(R"({"meta":{}})", {})), FormatError::Kind::BadHeader);
}

TEST(Qvc, OffsetMustBeContiguous) {
    const auto b = assemble(R"({"meta":{},"tensors":{"a":{"nbytes":4,"offset":4,"shape":[1]}}})", {0, 0, 0, 0});
    EXPECT_EQ(kind_of(b), FormatError::Kind::BadHeader);
}

TEST(Qvc, DuplicateName) {
    const auto b = assemble(
        R"({"meta":{},"tensors":{"a":{"nbytes":4,"offset":0,"shape":[1]},"a":{"nbytes":4,"offset":4,"shape":[1]}}})",
        {0, 0, 0, 0, 0, 0, 0, 0});
    std::string name;
    EXPECT_EQ(kind_of(b, &name), FormatError::Kind::DuplicateName);
    EXPECT_EQ(name, "a");
}

TEST(Qvc, SizeMismatch) {
    std::string name;
    const auto  wrong_nbytes = assemble(R"({"meta":{},"tensors":{"a":{"nbytes":8,"offset":0,"shape":[1]}}})",
                                        {0, 0, 0, 0, 0, 0, 0, 0});
    EXPECT_EQ(kind_of(wrong_nbytes, &name), FormatError::Kind::SizeMismatch);
    EXPECT_EQ(name, "a");

    auto short_payload = kGolden;
    short_payload.pop_back();
    EXPECT_EQ(kind_of(short_payload, &name), FormatError::Kind::SizeMismatch);
    EXPECT_EQ(name, "a");

    auto trailing = kGolden;
    trailing.push_back(0);
    EXPECT_EQ(kind_of(trailing), FormatError::Kind::SizeMismatch);
}

TEST(Qvc, NonFiniteNamesTensor) {
    const auto  b = assemble(R"({"meta":{},"tensors":{"ok":{"nbytes":4,"offset":0,"shape":[1]},)"
                             R"("w":{"nbytes":4,"offset":4,"shape":[1]}}})",
                             {0, 0, 0x80, 0x3F, 0x00, 0x00, 0xC0, 0x7F});
    std::string name;
    EXPECT_EQ(kind_of(b, &name), FormatError::Kind::NonFinite);
    EXPECT_EQ(name, "w");
}

TEST(Qvc, MissingFileIsIoError) {
    try {
        load_checkpoint("/nonexistent/dir/x.qvc");
        FAIL();
    } catch (const FormatError & e) {
        EXPECT_EQ(e.kind(), FormatError::Kind::Io);
    }
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a_hex(std::string_view("")), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex(std::string_view("a")), "af63dc4c8601ec8c");
}
