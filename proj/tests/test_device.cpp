#include <zlib.h>

#include <deque>
#include <fstream>
#include <random>
#include <string>

#include "aqnet/device.hpp"
#include "doctest.h"

using namespace aqnet;
using namespace aqnet::device;

namespace {

std::vector<std::uint8_t> read_hex(const std::string& name) {
    std::ifstream in(std::string(AQNET_SOURCE_DIR) + "/tests/golden/" + name);
    REQUIRE(in.good());
    std::string hex;
    in >> hex;
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i + 1 < hex.size(); i += 2) out.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
    return out;
}

constexpr Timestamp kT0 = 1636059600;

SensorReading reading_at(Timestamp t) {
    const auto k = static_cast<float>((t - kT0) / kSamplePeriod);
    return {t, 100.0f + k, 50.0f + k, 20.0f, 40.0f};
}

}  // namespace

TEST_CASE("golden payload") {
    const SensorReading r{kT0, 253.5f, 139.25f, 18.5f, 62.0f};
    const Payload p = encode_payload(r);
    const auto golden = read_hex("payload_single.hex");
    REQUIRE(golden.size() == kPayloadSize);
    CHECK(std::equal(p.begin(), p.end(), golden.begin()));
    CHECK(decode_payload(std::span<const std::uint8_t, kPayloadSize>(golden.data(), kPayloadSize)) == r);
}

TEST_CASE("golden frames") {
    const SensorReading a{kT0, 253.5f, 139.25f, 18.5f, 62.0f};
    const auto single = read_hex("frame_single.hex");
    CHECK(encode_frame(17, std::span(&a, 1)) == single);

    std::vector<SensorReading> three;
    for (int i = 0; i < 3; ++i) {
        three.push_back({kT0 + 30 * i, 120.0f + 0.5f * i, 66.0f + 0.25f * i, 21.0f - i, 55.5f + i});
    }
    const auto golden = read_hex("frame_three.hex");
    CHECK(encode_frame(0x0102, three) == golden);

    const auto decoded = decode_frame(golden);
    REQUIRE(std::holds_alternative<DecodedFrame>(decoded));
    const auto& f = std::get<DecodedFrame>(decoded);
    CHECK(f.device_id == 0x0102);
    CHECK(f.readings == three);
    // Re-encoding the decoded frame reproduces the fixture.
    CHECK(encode_frame(f.device_id, f.readings) == golden);
}

TEST_CASE("payload round trip on random readings") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> u(-1000.0f, 1000.0f);
    for (int i = 0; i < 1000; ++i) {
        const SensorReading r{static_cast<Timestamp>(rng() >> 1), u(rng), u(rng), u(rng), u(rng)};
        const Payload p = encode_payload(r);
        CHECK(p.size() == 24);
        CHECK(decode_payload(p) == r);
    }
}

TEST_CASE("crc matches zlib") {
    std::mt19937_64 rng(22);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::uint8_t> buf(rng() % 500);
        for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
        const auto ref = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
        CHECK(aqnet::device::crc32(buf) == ref);
    }
    const std::string check = "123456789";
    CHECK(aqnet::device::crc32(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), check.size())) ==
          0xCBF43926u);
}

TEST_CASE("frame size limits") {
    CHECK_THROWS_AS(encode_frame(1, {}), EncodingError);
    std::vector<SensorReading> many(kMaxReadingsPerFrame + 1);
    CHECK_THROWS_AS(encode_frame(1, many), EncodingError);
    many.pop_back();
    CHECK(encode_frame(1, many).size() == frame_size(kMaxReadingsPerFrame));
}

TEST_CASE("frame rejection codes") {
    const auto good = read_hex("frame_three.hex");
    auto err = [](std::vector<std::uint8_t> b) {
        const auto r = decode_frame(b);
        REQUIRE(std::holds_alternative<FrameError>(r));
        return std::get<FrameError>(r);
    };
    CHECK(err({0xA1, 0x51}) == FrameError::Truncated);
    CHECK(err(std::vector<std::uint8_t>(good.begin(), good.end() - 1)) == FrameError::Truncated);

    auto b = good;
    b[0] = 0x00;
    CHECK(err(b) == FrameError::BadMagic);
    b = good;
    b[2] = 0x02;
    CHECK(err(b) == FrameError::BadVersion);
    b = good;
    b[5] = 0;
    b[6] = 0;
    CHECK(err(b) == FrameError::BadLength);
    b = good;
    b.push_back(0);
    CHECK(err(b) == FrameError::BadLength);
    b = good;
    b[20] ^= 0x01;
    CHECK(err(b) == FrameError::BadCrc);
    b = good;
    b.back() ^= 0x80;
    CHECK(err(b) == FrameError::BadCrc);
}

TEST_CASE("random corruption never decodes silently") {
    const auto good = read_hex("frame_three.hex");
    std::mt19937_64 rng(23);
    for (int i = 0; i < 2000; ++i) {
        auto b = good;
        const std::size_t pos = rng() % b.size();
        b[pos] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        CHECK(std::holds_alternative<FrameError>(decode_frame(b)));
    }
}

TEST_CASE("transport helpers") {
    CHECK(length_prefix(0x01020304) == std::array<std::uint8_t, 4>{0x04, 0x03, 0x02, 0x01});
    CHECK(encode_ack(5, 258) == std::array<std::uint8_t, kAckSize>{5, 0x02, 0x01, 0, 0});
    CHECK(kMaxStreamFrame == 48011u);
}

TEST_CASE("outage schedule") {
    const OutageSchedule s({{100, 200}, {300, 400}});
    CHECK(s.at(99) == Connectivity::Online);
    CHECK(s.at(100) == Connectivity::Offline);
    CHECK(s.at(199) == Connectivity::Offline);
    CHECK(s.at(200) == Connectivity::Online);
    CHECK(s.at(350) == Connectivity::Offline);
    CHECK(s.at(400) == Connectivity::Online);
    CHECK_THROWS_AS(OutageSchedule({{100, 200}, {150, 300}}), ConfigError);
    CHECK_THROWS_AS(OutageSchedule({{100, 100}}), ConfigError);
}

TEST_CASE("online device sends every reading immediately") {
    DeviceState d(3);
    for (int i = 0; i < 10; ++i) {
        const Timestamp t = kT0 + i * kSamplePeriod;
        const auto frames = d.tick(t, reading_at(t), Connectivity::Online);
        REQUIRE(frames.size() == 1);
        CHECK(frames[0].count == 1);
        CHECK(frames[0].device_id == 3);
    }
    CHECK(d.transmitted() == 10);
    CHECK(d.stored() == 0);
}

TEST_CASE("tick preconditions") {
    DeviceState d(1);
    CHECK_THROWS_AS(d.tick(kT0 + 1, reading_at(kT0 + 1), Connectivity::Online), DomainError);
    CHECK_THROWS_AS(d.tick(kT0, reading_at(kT0 + 30), Connectivity::Online), DomainError);
    d.tick(kT0, reading_at(kT0), Connectivity::Online);
    CHECK_THROWS_AS(d.tick(kT0, reading_at(kT0), Connectivity::Online), DomainError);
}

TEST_CASE("fifo eviction keeps the newest readings in order") {
    DeviceState d(9, kBufferCapacity);
    const int offline = 25000;
    for (int i = 0; i < offline; ++i) {
        const Timestamp t = kT0 + i * kSamplePeriod;
        CHECK(d.tick(t, reading_at(t), Connectivity::Offline).empty());
    }
    CHECK(d.dropped() == 5000);
    CHECK(d.stored() == kBufferCapacity);
    CHECK(d.buffer().front().created_at == kT0 + 5000 * kSamplePeriod);

    const Timestamp t = kT0 + offline * kSamplePeriod;
    const auto frames = d.tick(t, reading_at(t), Connectivity::Online);
    CHECK(frames.size() == 11);  // 20001 readings in chunks of 2000
    std::vector<SensorReading> got;
    for (const auto& f : frames) {
        CHECK(f.count <= kMaxReadingsPerFrame);
        const auto dec = decode_frame(f.bytes);
        REQUIRE(std::holds_alternative<DecodedFrame>(dec));
        const auto& r = std::get<DecodedFrame>(dec).readings;
        CHECK(r.size() == f.count);
        got.insert(got.end(), r.begin(), r.end());
    }
    REQUIRE(got.size() == 20001);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == reading_at(kT0 + (5000 + static_cast<Timestamp>(i)) * kSamplePeriod));
    CHECK(d.sensed() == d.transmitted() + d.dropped());
}

TEST_CASE("device matches a reference fifo under random connectivity") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t cap = 1 + rng() % 50;
        DeviceState d(1, cap);
        std::deque<SensorReading> ref_buf;
        std::vector<SensorReading> ref_sent, sent;
        std::uint64_t ref_dropped = 0;
        bool offline = false;
        for (int i = 0; i < 3000; ++i) {
            if (rng() % 40 == 0) offline = !offline;
            const Timestamp t = kT0 + i * kSamplePeriod;
            const SensorReading r = reading_at(t);
            if (offline) {
                if (ref_buf.size() == cap) {
                    ref_buf.pop_front();
                    ++ref_dropped;
                }
                ref_buf.push_back(r);
            } else {
                ref_sent.insert(ref_sent.end(), ref_buf.begin(), ref_buf.end());
                ref_buf.clear();
                ref_sent.push_back(r);
            }
            for (const auto& f : d.tick(t, r, offline ? Connectivity::Offline : Connectivity::Online)) {
                const auto dec = decode_frame(f.bytes);
                const auto& rs = std::get<DecodedFrame>(dec).readings;
                sent.insert(sent.end(), rs.begin(), rs.end());
            }
        }
        CHECK(sent == ref_sent);
        CHECK(d.dropped() == ref_dropped);
        CHECK(d.stored() == ref_buf.size());
        CHECK(d.sensed() == d.transmitted() + d.dropped() + d.stored());
    }
}
