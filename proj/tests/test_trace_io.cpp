#include <bit>
#include <cstring>
#include <limits>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "test_support.hpp"

using namespace hero;
using namespace hero::testing;
using nlohmann::json;

namespace {

struct Parsed {
    json header;
    std::size_t payload_start;
};

Parsed parse_header(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);  // test hosts are little-endian
    Parsed p;
    p.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    p.payload_start = (12 + len + 63) / 64 * 64;
    return p;
}

/// Re-emits a container with a rewritten header, keeping the payload bytes.
std::vector<std::uint8_t> with_header(const std::vector<std::uint8_t>& bytes, const json& header) {
    const auto old = parse_header(bytes);
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
    const auto n = static_cast<std::uint32_t>(text.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    out.insert(out.end(), text.begin(), text.end());
    out.resize((out.size() + 63) / 64 * 64, 0);
    out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(old.payload_start), bytes.end());
    return out;
}

void put_float(std::vector<std::uint8_t>& bytes, std::size_t at, float v) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) bytes[at + i] = static_cast<std::uint8_t>(u >> (8 * i));
}

std::size_t tensor_offset(const Parsed& p, const std::string& name) {
    for (const auto& t : p.header["tensors"])
        if (t["name"] == name) return p.payload_start + t["offset"].get<std::size_t>();
    ADD_FAILURE() << "no tensor " << name;
    return 0;
}

Errc read_error(const std::vector<std::uint8_t>& bytes, std::string* message = nullptr) {
    try {
        read_trace(bytes);
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.code();
    }
    ADD_FAILURE() << "read_trace accepted the input";
    return Errc::IoError;
}

}  // namespace

TEST(TraceIo, MinimalContainer) {
    const auto t = read_trace(write_trace(minimal_trace()));
    EXPECT_EQ(t.K(), 1u);
    EXPECT_EQ(t.N, 4u);
    EXPECT_EQ(t.num_layers, 2u);
    for (float v : t.tiles[0].cls_attn.data) EXPECT_EQ(v, 0.1f);
    EXPECT_EQ(t, minimal_trace());
}

TEST(TraceIo, RowSumAboveOneIsRejected) {
    auto bytes = write_trace(minimal_trace());
    const auto p = parse_header(bytes);
    // 0.6 + 3 * 0.3 = 1.5 in the first row of the tile.
    const auto at = tensor_offset(p, "tile/0/cls_attn");
    put_float(bytes, at, 0.6f);
    for (int j = 1; j < 4; ++j) put_float(bytes, at + 4 * j, 0.3f);
    std::string msg;
    EXPECT_EQ(read_error(bytes, &msg), Errc::ShapeMismatch);
    EXPECT_NE(msg.find("tile/0/cls_attn"), std::string::npos);
}

TEST(TraceIo, WriterRejectsInvalidTrace) {
    auto t = minimal_trace();
    t.tiles[0].cls_attn.data[0] = 0.8f;
    try {
        write_trace(t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InvariantViolation);
    }
}

TEST(TraceIo, NaNNamesTheTensor) {
    auto bytes = write_trace(minimal_trace());
    const auto p = parse_header(bytes);
    put_float(bytes, tensor_offset(p, "global/cls_embed") + 4, std::numeric_limits<float>::quiet_NaN());
    std::string msg;
    EXPECT_EQ(read_error(bytes, &msg), Errc::NonFiniteValue);
    EXPECT_NE(msg.find("global/cls_embed"), std::string::npos);
}

TEST(TraceIo, BadMagic) {
    auto bytes = write_trace(minimal_trace());
    bytes[0] = 'X';
    EXPECT_EQ(read_error(bytes), Errc::BadMagic);
    EXPECT_EQ(read_error({}), Errc::BadMagic);
}

TEST(TraceIo, CorruptHeaderCases) {
    const auto bytes = write_trace(minimal_trace());
    const auto p = parse_header(bytes);

    auto truncated = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 30);
    EXPECT_EQ(read_error(truncated), Errc::CorruptHeader);

    auto garbage = bytes;
    garbage[12] = '!';
    EXPECT_EQ(read_error(garbage), Errc::CorruptHeader);

    auto h = p.header;
    h["version"] = 2;
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);

    h = p.header;
    h["tensors"][0]["dtype"] = "f16";
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);

    h = p.header;
    h["tensors"][1]["offset"] = 1 << 20;
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);

    h = p.header;
    h["tensors"][1]["offset"] = 4;
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);

    h = p.header;
    h["tensors"].erase(1);
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);

    h = p.header;
    h["tensors"][1]["name"] = "tile/7/cls_embed";
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);

    h = p.header;
    h.erase("N");
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::CorruptHeader);
}

TEST(TraceIo, NbytesMustMatchShape) {
    const auto bytes = write_trace(minimal_trace());
    auto h = parse_header(bytes).header;
    h["tensors"][0]["nbytes"] = 28;
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::ShapeMismatch);

    h = parse_header(bytes).header;
    h["tensors"][0]["shape"] = {2, 3};
    h["tensors"][0]["nbytes"] = 24;
    EXPECT_EQ(read_error(with_header(bytes, h)), Errc::ShapeMismatch);
}

TEST(TraceIo, HeaderRewriteIsLossless) {
    // Sanity check for the helper used above.
    const auto bytes = write_trace(minimal_trace());
    EXPECT_EQ(read_trace(with_header(bytes, parse_header(bytes).header)), minimal_trace());
}

TEST(TraceIo, DeterministicBytes) {
    std::mt19937_64 rng(3);
    const auto t = random_trace(rng);
    EXPECT_EQ(write_trace(t), write_trace(t));
}

TEST(TraceIo, FourTileHeader) {
    SynthSpec spec;
    spec.seed = 1;
    spec.N = 16;
    spec.num_layers = 4;
    spec.stage_boundary = 2;
    spec.planted_primary = {{1, 2}};
    spec.planted_shortcut = {0};
    const auto bytes = write_trace(generate(spec));
    const auto p = parse_header(bytes);
    EXPECT_EQ(p.header["grid"], json({2, 2}));
    std::set<std::string> groups;
    for (const auto& t : p.header["tensors"]) {
        const auto name = t["name"].get<std::string>();
        if (name.rfind("tile/", 0) == 0) groups.insert(name.substr(0, name.find('/', 5)));
    }
    EXPECT_EQ(groups, (std::set<std::string>{"tile/0", "tile/1", "tile/2", "tile/3"}));
}

TEST(TraceIo, PayloadAlignment) {
    std::mt19937_64 rng(8);
    const auto bytes = write_trace(random_trace(rng));
    const auto p = parse_header(bytes);
    EXPECT_EQ(p.payload_start % 64, 0u);
    for (const auto& t : p.header["tensors"]) EXPECT_EQ(t["offset"].get<std::size_t>() % 64, 0u);
}

TEST(TraceIo, OptionalEmbeddingsRoundTrip) {
    std::mt19937_64 rng(21);
    auto t = random_trace(rng, false);
    EXPECT_EQ(read_trace(write_trace(t)), t);
    t = random_trace(rng, true);
    t.thumbnail.clip_embed = random_unit(rng, t.text_embed->size());
    EXPECT_EQ(read_trace(write_trace(t)), t);
}

TEST(TraceIo, RandomRoundTripsAreBitExact) {
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 200; ++i) {
        const auto t = random_trace(rng, i % 2 == 0);
        const auto back = read_trace(write_trace(t));
        ASSERT_EQ(back, t);
    }
}

TEST(TraceIo, FileRoundTrip) {
    const auto dir = scratch_dir("trace-io");
    write_trace_file(dir / "m.herotrc", minimal_trace());
    EXPECT_EQ(read_trace_file(dir / "m.herotrc"), minimal_trace());
    try {
        read_trace_file(dir / "absent.herotrc");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::IoError);
    }
}
