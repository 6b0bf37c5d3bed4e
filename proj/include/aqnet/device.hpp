#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "aqnet/common.hpp"

/// Device firmware model: payload and frame codec, store-and-forward state machine.
namespace aqnet::device {

/// One sensing instance, exactly as carried on the wire.
struct SensorReading {
    Timestamp created_at = 0;
    float pm10 = 0.0f;
    float pm25 = 0.0f;
    float temp = 0.0f;
    float rh = 0.0f;

    bool operator==(const SensorReading&) const = default;
};

inline constexpr std::size_t kPayloadSize = 24;
inline constexpr std::size_t kHeaderSize = 7;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::uint8_t kMagic0 = 0xA1;
inline constexpr std::uint8_t kMagic1 = 0x51;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kMaxReadingsPerFrame = 2000;

inline constexpr std::size_t kBufferCapacity = 20000;  // S
inline constexpr Timestamp kSamplePeriod = 30;

using Payload = std::array<std::uint8_t, kPayloadSize>;

/// Little-endian: u64 created_at | f32 pm10 | f32 pm25 | f32 temp | f32 rh.
Payload encode_payload(const SensorReading& r);
SensorReading decode_payload(std::span<const std::uint8_t, kPayloadSize> bytes);

/// Frame: A1 51 | 01 | device_id u16 | count u16 | count x payload | CRC-32 u32 over everything before it.
/// Throws EncodingError unless 1 <= readings.size() <= kMaxReadingsPerFrame.
std::vector<std::uint8_t> encode_frame(DeviceId device_id, std::span<const SensorReading> readings);

inline constexpr std::size_t frame_size(std::size_t count) { return kHeaderSize + count * kPayloadSize + kCrcSize; }

enum class FrameError : std::uint8_t {
    Truncated = 1,
    BadMagic = 2,
    BadVersion = 3,
    BadLength = 4,
    BadCrc = 5,
};

std::string_view to_string(FrameError e);

struct DecodedFrame {
    DeviceId device_id = 0;
    std::vector<SensorReading> readings;
};

/// Never throws; untrusted input.
std::variant<DecodedFrame, FrameError> decode_frame(std::span<const std::uint8_t> bytes);

/// IEEE CRC-32 (zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Stream transport. Each frame is preceded by its length as u32 LE; the gateway replies to
// every frame with a 5-byte ack: status u8 (0 = accepted, otherwise FrameError) | count u32 LE.

inline constexpr std::size_t kAckSize = 5;
inline constexpr std::uint32_t kMaxStreamFrame = static_cast<std::uint32_t>(frame_size(kMaxReadingsPerFrame));

std::array<std::uint8_t, 4> length_prefix(std::size_t n);
std::array<std::uint8_t, kAckSize> encode_ack(std::uint8_t status, std::uint32_t count);

// ---------------------------------------------------------------------------
// State machine

enum class Connectivity : std::uint8_t { Online, Offline };

struct Frame {
    DeviceId device_id = 0;
    std::size_t count = 0;
    std::vector<std::uint8_t> bytes;
};

/// Offline intervals [start, end), sorted and non-overlapping.
class OutageSchedule {
public:
    struct Interval {
        Timestamp start;
        Timestamp end;
    };

    OutageSchedule() = default;
    /// Throws ConfigError unless intervals are non-empty, sorted and non-overlapping.
    explicit OutageSchedule(std::vector<Interval> intervals);

    Connectivity at(Timestamp t) const;
    const std::vector<Interval>& intervals() const { return intervals_; }

private:
    std::vector<Interval> intervals_;
};

/// Firmware state of one device. Single owner; advanced only by tick().
class DeviceState {
public:
    explicit DeviceState(DeviceId id, std::size_t capacity = kBufferCapacity,
                         Timestamp sample_period = kSamplePeriod);

    /// One sensing cycle. Online: emits the FIFO backlog (if any) followed by `reading`, chunked
    /// at kMaxReadingsPerFrame, and empties the buffer. Offline: appends `reading`, evicting the
    /// oldest buffered reading when full. Throws DomainError if `now` is off the sample grid,
    /// reading.created_at != now, or time does not advance.
    std::vector<Frame> tick(Timestamp now, const SensorReading& reading, Connectivity connectivity);

    DeviceId id() const { return id_; }
    std::size_t stored() const { return buffer_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t dropped() const { return dropped_; }
    std::uint64_t sensed() const { return sensed_; }
    std::uint64_t transmitted() const { return transmitted_; }
    const std::deque<SensorReading>& buffer() const { return buffer_; }

private:
    DeviceId id_;
    std::size_t capacity_;
    Timestamp sample_period_;
    std::deque<SensorReading> buffer_;
    std::uint64_t dropped_ = 0;
    std::uint64_t sensed_ = 0;
    std::uint64_t transmitted_ = 0;
    Timestamp last_tick_ = 0;
    bool started_ = false;
};

}  // namespace aqnet::device
