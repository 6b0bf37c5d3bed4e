#include "aqnet/device.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <limits>
#include <string>

namespace aqnet::device {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <typename T>
void put_le(std::uint8_t* out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* in) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[i]) << (8 * i));
    return v;
}

void put_f32(std::uint8_t* out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }
float get_f32(const std::uint8_t* in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

}  // namespace

Payload encode_payload(const SensorReading& r) {
    Payload p{};
    put_le(p.data(), static_cast<std::uint64_t>(r.created_at));
    put_f32(p.data() + 8, r.pm10);
    put_f32(p.data() + 12, r.pm25);
    put_f32(p.data() + 16, r.temp);
    put_f32(p.data() + 20, r.rh);
    return p;
}

SensorReading decode_payload(std::span<const std::uint8_t, kPayloadSize> bytes) {
    SensorReading r;
    r.created_at = static_cast<Timestamp>(get_le<std::uint64_t>(bytes.data()));
    r.pm10 = get_f32(bytes.data() + 8);
    r.pm25 = get_f32(bytes.data() + 12);
    r.temp = get_f32(bytes.data() + 16);
    r.rh = get_f32(bytes.data() + 20);
    return r;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; frames are far below that limit.
    crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_frame(DeviceId device_id, std::span<const SensorReading> readings) {
    if (readings.empty()) throw EncodingError("frame must carry at least one reading");
    if (readings.size() > kMaxReadingsPerFrame) {
        throw EncodingError("frame carries " + std::to_string(readings.size()) + " readings, limit is " +
                            std::to_string(kMaxReadingsPerFrame));
    }
    std::vector<std::uint8_t> out(frame_size(readings.size()));
    out[0] = kMagic0;
    out[1] = kMagic1;
    out[2] = kVersion;
    put_le(out.data() + 3, device_id);
    put_le(out.data() + 5, static_cast<std::uint16_t>(readings.size()));
    std::uint8_t* cursor = out.data() + kHeaderSize;
    for (const SensorReading& r : readings) {
        const Payload p = encode_payload(r);
        std::copy(p.begin(), p.end(), cursor);
        cursor += kPayloadSize;
    }
    const std::size_t body = out.size() - kCrcSize;
    put_le(cursor, crc32(std::span(out.data(), body)));
    return out;
}

std::string_view to_string(FrameError e) {
    switch (e) {
        case FrameError::Truncated: return "truncated";
        case FrameError::BadMagic: return "bad magic";
        case FrameError::BadVersion: return "bad version";
        case FrameError::BadLength: return "bad length";
        case FrameError::BadCrc: return "bad crc";
    }
    return "unknown";
}

std::variant<DecodedFrame, FrameError> decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize + kCrcSize) return FrameError::Truncated;
    if (bytes[0] != kMagic0 || bytes[1] != kMagic1) return FrameError::BadMagic;
    if (bytes[2] != kVersion) return FrameError::BadVersion;
    const auto count = get_le<std::uint16_t>(bytes.data() + 5);
    if (count == 0 || count > kMaxReadingsPerFrame) return FrameError::BadLength;
    if (bytes.size() < frame_size(count)) return FrameError::Truncated;
    if (bytes.size() > frame_size(count)) return FrameError::BadLength;
    const std::size_t body = bytes.size() - kCrcSize;
    if (crc32(bytes.first(body)) != get_le<std::uint32_t>(bytes.data() + body)) return FrameError::BadCrc;

    DecodedFrame f;
    f.device_id = get_le<std::uint16_t>(bytes.data() + 3);
    f.readings.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        f.readings.push_back(decode_payload(bytes.subspan(kHeaderSize + i * kPayloadSize).first<kPayloadSize>()));
    }
    return f;
}

std::array<std::uint8_t, 4> length_prefix(std::size_t n) {
    std::array<std::uint8_t, 4> out{};
    put_le(out.data(), static_cast<std::uint32_t>(n));
    return out;
}

std::array<std::uint8_t, kAckSize> encode_ack(std::uint8_t status, std::uint32_t count) {
    std::array<std::uint8_t, kAckSize> out{};
    out[0] = status;
    put_le(out.data() + 1, count);
    return out;
}

// ---------------------------------------------------------------------------

OutageSchedule::OutageSchedule(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
        if (intervals_[i].end <= intervals_[i].start) throw ConfigError("outage interval must have start < end");
        if (i > 0 && intervals_[i].start < intervals_[i - 1].end) {
            throw ConfigError("outage intervals must be sorted and non-overlapping");
        }
    }
}

Connectivity OutageSchedule::at(Timestamp t) const {
    auto it = std::upper_bound(intervals_.begin(), intervals_.end(), t,
                               [](Timestamp v, const Interval& iv) { return v < iv.start; });
    if (it == intervals_.begin()) return Connectivity::Online;
    --it;
    return t < it->end ? Connectivity::Offline : Connectivity::Online;
}

DeviceState::DeviceState(DeviceId id, std::size_t capacity, Timestamp sample_period)
    : id_(id), capacity_(capacity), sample_period_(sample_period) {
    if (capacity_ == 0) throw ConfigError("device buffer capacity must be >= 1");
    if (sample_period_ <= 0) throw ConfigError("sample period must be > 0");
}

std::vector<Frame> DeviceState::tick(Timestamp now, const SensorReading& reading, Connectivity connectivity) {
    if (now % sample_period_ != 0) throw DomainError("tick time is not aligned to the sample period");
    if (reading.created_at != now) throw DomainError("reading timestamp differs from tick time");
    if (started_ && now <= last_tick_) throw DomainError("tick time must strictly increase");
    started_ = true;
    last_tick_ = now;
    ++sensed_;

    if (connectivity == Connectivity::Offline) {
        if (buffer_.size() == capacity_) {
            buffer_.pop_front();
            ++dropped_;
        }
        buffer_.push_back(reading);
        return {};
    }

    std::vector<Frame> frames;
    if (buffer_.empty()) {
        frames.push_back({id_, 1, encode_frame(id_, std::span(&reading, 1))});
        ++transmitted_;
        return frames;
    }

    buffer_.push_back(reading);
    std::vector<SensorReading> chunk;
    chunk.reserve(std::min(buffer_.size(), kMaxReadingsPerFrame));
    while (!buffer_.empty()) {
        chunk.clear();
        while (!buffer_.empty() && chunk.size() < kMaxReadingsPerFrame) {
            chunk.push_back(buffer_.front());
            buffer_.pop_front();
        }
        frames.push_back({id_, chunk.size(), encode_frame(id_, chunk)});
        transmitted_ += chunk.size();
    }
    return frames;
}

}  // namespace aqnet::device
