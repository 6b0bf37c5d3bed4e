#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "aqnet/device.hpp"
#include "aqnet/fieldsim.hpp"

/// Frame ingestion, per-device channel storage and aggregation queries.
namespace aqnet::gateway {

using device::SensorReading;

enum class Aggregation { Raw, TenMin, Hourly };

Aggregation parse_aggregation(std::string_view s);  // "raw", "10min", "hourly"
std::string_view to_string(Aggregation a);
/// Bucket width in seconds; 0 for Raw.
Timestamp bucket_width(Aggregation a);

struct QueryRequest {
    std::optional<DeviceId> device;  // unset: all devices
    Timestamp from = 0;
    Timestamp to = 0;
    Aggregation agg = Aggregation::Raw;
};

/// One output row. For raw queries `t` is the reading time and n = 1; otherwise `t` labels the
/// left-closed bucket [t, t + width) and the values are bucket means.
struct SeriesPoint {
    Timestamp t = 0;
    std::size_t n = 0;
    double pm10 = 0.0;
    double pm25 = 0.0;
    double temp = 0.0;
    double rh = 0.0;

    bool operator==(const SeriesPoint&) const = default;
};

struct DeviceSeries {
    DeviceId device_id = 0;
    Aggregation agg = Aggregation::Raw;
    std::vector<SeriesPoint> points;
};

/// Aggregates time-sorted readings in [from, to] (inclusive) into buckets.
std::vector<SeriesPoint> aggregate(std::span<const SensorReading> sorted, Timestamp from, Timestamp to, Aggregation agg);

struct Ack {
    std::uint32_t accepted = 0;  // readings carried by the frame
    std::uint32_t inserted = 0;  // readings that were new to the store
};

struct DeviceInfo {
    DeviceId device_id = 0;
    std::optional<GeoPoint> location;
    std::optional<LocationType> type;
    std::size_t count = 0;
    std::optional<Timestamp> first;
    std::optional<Timestamp> last;
};

/// Append-only per-device store. Duplicate (device, created_at) pairs collapse to the first
/// arrival; ordering is restored at query time.
class Channel {
public:
    /// Returns the number of newly inserted readings.
    std::size_t append(std::span<const SensorReading> readings);
    /// Time-ordered copy of all readings.
    std::vector<SensorReading> sorted() const;
    std::size_t size() const;

    void attach_log(const std::filesystem::path& path);
    /// Rewrites `snap_path` with the time-ordered readings and truncates the log.
    void snapshot(const std::filesystem::path& snap_path);

private:
    mutable std::shared_mutex mu_;
    std::vector<SensorReading> readings_;
    std::unordered_set<Timestamp> seen_;
    bool in_order_ = true;
    std::filesystem::path log_path_;
    std::ofstream log_;
};

class Store {
public:
    /// In-memory store.
    Store();
    /// Durable store rooted at `data_dir`; replays any snapshot and log found there.
    explicit Store(std::filesystem::path data_dir);
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Validates and decodes an untrusted frame. Rejections increment frames_rejected().
    std::variant<Ack, device::FrameError> handle_frame(std::span<const std::uint8_t> bytes);

    /// Direct ingest path (frame decoding already done, or CSV import).
    std::size_t ingest(DeviceId id, std::span<const SensorReading> readings);

    void register_device(const fieldsim::DeploymentEntry& entry);

    std::vector<DeviceInfo> devices() const;
    bool has_device(DeviceId id) const;

    /// Time-ordered readings with from <= created_at <= to. Throws NotFound.
    std::vector<SensorReading> readings(DeviceId id, Timestamp from, Timestamp to) const;

    /// Throws NotFound for an unknown device and DomainError when from > to.
    std::vector<DeviceSeries> query_series(const QueryRequest& req) const;

    /// Columns created_at,pm10,pm25,temp,rh. Throws NotFound.
    void export_csv(DeviceId id, Timestamp from, Timestamp to, std::ostream& out) const;

    /// Writes per-device snapshots and truncates logs. No-op for an in-memory store.
    void snapshot();

    std::uint64_t frames_accepted() const { return frames_accepted_.load(); }
    std::uint64_t frames_rejected() const { return frames_rejected_.load(); }
    std::uint64_t readings_inserted() const { return readings_inserted_.load(); }

private:
    Channel& channel(DeviceId id);
    const Channel* find_channel(DeviceId id) const;
    void save_registry() const;
    void load();

    std::optional<std::filesystem::path> data_dir_;
    mutable std::shared_mutex mu_;
    std::map<DeviceId, std::unique_ptr<Channel>> channels_;
    std::map<DeviceId, fieldsim::DeploymentEntry> registry_;
    std::atomic<std::uint64_t> frames_accepted_{0};
    std::atomic<std::uint64_t> frames_rejected_{0};
    std::atomic<std::uint64_t> readings_inserted_{0};
};

// ---------------------------------------------------------------------------
// File formats

void write_readings_csv(std::span<const SensorReading> readings, std::ostream& out);
/// Throws SchemaError naming the offending line/column.
std::vector<SensorReading> read_readings_csv(std::istream& in);

/// JSON document for one device series (`/devices/{id}/series`).
std::string series_to_json(const DeviceSeries& s);
std::string devices_to_json(const std::vector<DeviceInfo>& devices);

}  // namespace aqnet::gateway
