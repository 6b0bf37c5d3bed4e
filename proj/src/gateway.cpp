#include "aqnet/gateway.hpp"

#include <algorithm>
#include <mutex>
#include "json.hpp"

#include "aqnet/csv.hpp"

namespace aqnet::gateway {

namespace fs = std::filesystem;

Aggregation parse_aggregation(std::string_view s) {
    if (s == "raw") return Aggregation::Raw;
    if (s == "10min") return Aggregation::TenMin;
    if (s == "hourly") return Aggregation::Hourly;
    throw DomainError("unknown aggregation '" + std::string(s) + "' (expected raw, 10min or hourly)");
}

std::string_view to_string(Aggregation a) {
    switch (a) {
        case Aggregation::Raw: return "raw";
        case Aggregation::TenMin: return "10min";
        case Aggregation::Hourly: return "hourly";
    }
    return "?";
}

Timestamp bucket_width(Aggregation a) {
    switch (a) {
        case Aggregation::Raw: return 0;
        case Aggregation::TenMin: return 600;
        case Aggregation::Hourly: return kSecondsPerHour;
    }
    return 0;
}

std::vector<SeriesPoint> aggregate(std::span<const SensorReading> sorted, Timestamp from, Timestamp to,
                                   Aggregation agg) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), from,
                               [](const SensorReading& r, Timestamp t) { return r.created_at < t; });
    auto hi = std::upper_bound(lo, sorted.end(), to,
                               [](Timestamp t, const SensorReading& r) { return t < r.created_at; });
    std::vector<SeriesPoint> out;
    const Timestamp width = bucket_width(agg);
    if (width == 0) {
        out.reserve(static_cast<std::size_t>(hi - lo));
        for (auto it = lo; it != hi; ++it) out.push_back({it->created_at, 1, it->pm10, it->pm25, it->temp, it->rh});
        return out;
    }
    for (auto it = lo; it != hi;) {
        const Timestamp start = floor_to(it->created_at, width);
        SeriesPoint p{start, 0, 0.0, 0.0, 0.0, 0.0};
        for (; it != hi && it->created_at < start + width; ++it) {
            ++p.n;
            p.pm10 += it->pm10;
            p.pm25 += it->pm25;
            p.temp += it->temp;
            p.rh += it->rh;
        }
        const auto n = static_cast<double>(p.n);
        p.pm10 /= n;
        p.pm25 /= n;
        p.temp /= n;
        p.rh /= n;
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel

std::size_t Channel::append(std::span<const SensorReading> readings) {
    std::unique_lock lock(mu_);
    std::size_t inserted = 0;
    for (const SensorReading& r : readings) {
        if (!seen_.insert(r.created_at).second) continue;
        if (!readings_.empty() && r.created_at < readings_.back().created_at) in_order_ = false;
        readings_.push_back(r);
        ++inserted;
        if (log_.is_open()) {
            const device::Payload p = device::encode_payload(r);
            log_.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size()));
        }
    }
    if (inserted > 0 && log_.is_open()) log_.flush();
    return inserted;
}

std::vector<SensorReading> Channel::sorted() const {
    std::vector<SensorReading> copy;
    bool in_order = false;
    {
        std::shared_lock lock(mu_);
        copy = readings_;
        in_order = in_order_;
    }
    if (!in_order) {
        std::sort(copy.begin(), copy.end(),
                  [](const SensorReading& a, const SensorReading& b) { return a.created_at < b.created_at; });
    }
    return copy;
}

std::size_t Channel::size() const {
    std::shared_lock lock(mu_);
    return readings_.size();
}

void Channel::attach_log(const fs::path& path) {
    std::unique_lock lock(mu_);
    log_path_ = path;
    log_.open(path, std::ios::binary | std::ios::app);
    if (!log_) throw Error("cannot open channel log " + path.string());
}

void Channel::snapshot(const fs::path& snap_path) {
    std::unique_lock lock(mu_);
    if (!in_order_) {
        std::sort(readings_.begin(), readings_.end(),
                  [](const SensorReading& a, const SensorReading& b) { return a.created_at < b.created_at; });
        in_order_ = true;
    }
    const fs::path tmp = snap_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const SensorReading& r : readings_) {
            const device::Payload p = device::encode_payload(r);
            out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size()));
        }
        if (!out) throw Error("cannot write snapshot " + tmp.string());
    }
    fs::rename(tmp, snap_path);
    if (log_.is_open()) {
        log_.close();
        log_.open(log_path_, std::ios::binary | std::ios::trunc);
    }
}

// ---------------------------------------------------------------------------
// Store

namespace {

fs::path log_path(const fs::path& dir, DeviceId id) { return dir / ("device_" + std::to_string(id) + ".log"); }
fs::path snap_path(const fs::path& dir, DeviceId id) { return dir / ("device_" + std::to_string(id) + ".snap"); }

std::vector<SensorReading> read_payload_file(const fs::path& path) {
    std::vector<SensorReading> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    device::Payload p{};
    while (in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size()))) {
        out.push_back(device::decode_payload(p));
    }
    // A torn trailing record (crash mid-write) is ignored.
    return out;
}

}  // namespace

Store::Store() = default;

Store::Store(fs::path data_dir) : data_dir_(std::move(data_dir)) {
    fs::create_directories(*data_dir_);
    load();
}

Store::~Store() = default;

void Store::load() {
    const fs::path reg = *data_dir_ / "devices.csv";
    if (fs::exists(reg)) {
        std::ifstream in(reg);
        for (const auto& e : fieldsim::read_deployment_csv(in).entries) registry_[e.device_id] = e;
    }
    std::vector<DeviceId> ids;
    for (const auto& entry : fs::directory_iterator(*data_dir_)) {
        const std::string name = entry.path().filename().string();
        const bool log = name.ends_with(".log");
        const bool snap = name.ends_with(".snap");
        if (!name.starts_with("device_") || !(log || snap)) continue;
        const std::string num = name.substr(7, name.find('.') - 7);
        ids.push_back(static_cast<DeviceId>(std::stoul(num)));
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (DeviceId id : ids) {
        auto ch = std::make_unique<Channel>();
        ch->append(read_payload_file(snap_path(*data_dir_, id)));
        ch->append(read_payload_file(log_path(*data_dir_, id)));
        ch->attach_log(log_path(*data_dir_, id));
        channels_[id] = std::move(ch);
    }
}

Channel& Store::channel(DeviceId id) {
    {
        std::shared_lock lock(mu_);
        auto it = channels_.find(id);
        if (it != channels_.end()) return *it->second;
    }
    std::unique_lock lock(mu_);
    auto& slot = channels_[id];
    if (!slot) {
        slot = std::make_unique<Channel>();
        if (data_dir_) slot->attach_log(log_path(*data_dir_, id));
    }
    return *slot;
}

const Channel* Store::find_channel(DeviceId id) const {
    std::shared_lock lock(mu_);
    auto it = channels_.find(id);
    return it == channels_.end() ? nullptr : it->second.get();
}

std::variant<Ack, device::FrameError> Store::handle_frame(std::span<const std::uint8_t> bytes) {
    auto decoded = device::decode_frame(bytes);
    if (auto* err = std::get_if<device::FrameError>(&decoded)) {
        ++frames_rejected_;
        return *err;
    }
    const auto& frame = std::get<device::DecodedFrame>(decoded);
    Ack ack;
    ack.accepted = static_cast<std::uint32_t>(frame.readings.size());
    ack.inserted = static_cast<std::uint32_t>(ingest(frame.device_id, frame.readings));
    ++frames_accepted_;
    return ack;
}

std::size_t Store::ingest(DeviceId id, std::span<const SensorReading> readings) {
    const std::size_t n = channel(id).append(readings);
    readings_inserted_ += n;
    return n;
}

void Store::register_device(const fieldsim::DeploymentEntry& entry) {
    {
        std::unique_lock lock(mu_);
        registry_[entry.device_id] = entry;
    }
    channel(entry.device_id);
    save_registry();
}

void Store::save_registry() const {
    if (!data_dir_) return;
    fieldsim::DeploymentMap map;
    {
        std::shared_lock lock(mu_);
        for (const auto& [id, e] : registry_) map.entries.push_back(e);
    }
    const fs::path tmp = *data_dir_ / "devices.csv.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        fieldsim::write_deployment_csv(map, out);
    }
    fs::rename(tmp, *data_dir_ / "devices.csv");
}

bool Store::has_device(DeviceId id) const { return find_channel(id) != nullptr; }

std::vector<DeviceInfo> Store::devices() const {
    std::vector<std::pair<DeviceId, const Channel*>> chans;
    std::map<DeviceId, fieldsim::DeploymentEntry> reg;
    {
        std::shared_lock lock(mu_);
        for (const auto& [id, ch] : channels_) chans.emplace_back(id, ch.get());
        reg = registry_;
    }
    std::vector<DeviceInfo> out;
    for (const auto& [id, ch] : chans) {
        DeviceInfo info;
        info.device_id = id;
        if (auto it = reg.find(id); it != reg.end()) {
            info.location = it->second.location;
            info.type = it->second.type;
        }
        const auto data = ch->sorted();
        info.count = data.size();
        if (!data.empty()) {
            info.first = data.front().created_at;
            info.last = data.back().created_at;
        }
        out.push_back(info);
    }
    return out;
}

std::vector<SensorReading> Store::readings(DeviceId id, Timestamp from, Timestamp to) const {
    const Channel* ch = find_channel(id);
    if (!ch) throw NotFound("unknown device " + std::to_string(id));
    const auto all = ch->sorted();
    auto lo = std::lower_bound(all.begin(), all.end(), from,
                               [](const SensorReading& r, Timestamp t) { return r.created_at < t; });
    auto hi = std::upper_bound(lo, all.end(), to, [](Timestamp t, const SensorReading& r) { return t < r.created_at; });
    return {lo, hi};
}

std::vector<DeviceSeries> Store::query_series(const QueryRequest& req) const {
    if (req.from > req.to) throw DomainError("query range has from > to");
    std::vector<DeviceId> ids;
    if (req.device) {
        if (!has_device(*req.device)) throw NotFound("unknown device " + std::to_string(*req.device));
        ids.push_back(*req.device);
    } else {
        std::shared_lock lock(mu_);
        for (const auto& [id, ch] : channels_) ids.push_back(id);
    }
    std::vector<DeviceSeries> out;
    for (DeviceId id : ids) {
        const auto data = readings(id, req.from, req.to);
        out.push_back({id, req.agg, aggregate(data, req.from, req.to, req.agg)});
    }
    return out;
}

void Store::export_csv(DeviceId id, Timestamp from, Timestamp to, std::ostream& out) const {
    write_readings_csv(readings(id, from, to), out);
}

void Store::snapshot() {
    if (!data_dir_) return;
    std::vector<std::pair<DeviceId, Channel*>> chans;
    {
        std::shared_lock lock(mu_);
        for (auto& [id, ch] : channels_) chans.emplace_back(id, ch.get());
    }
    for (auto& [id, ch] : chans) ch->snapshot(snap_path(*data_dir_, id));
}

// ---------------------------------------------------------------------------
// Formats

namespace {
constexpr std::array<std::string_view, 5> kReadingCols{"created_at", "pm10", "pm25", "temp", "rh"};
}

void write_readings_csv(std::span<const SensorReading> readings, std::ostream& out) {
    out << "created_at,pm10,pm25,temp,rh\n";
    for (const SensorReading& r : readings) {
        out << format_iso8601(r.created_at) << ',' << csv::format(r.pm10) << ',' << csv::format(r.pm25) << ','
            << csv::format(r.temp) << ',' << csv::format(r.rh) << '\n';
    }
}

std::vector<SensorReading> read_readings_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) throw SchemaError("readings csv: empty file");
    csv::expect_header(line, kReadingCols, "readings csv");
    std::vector<SensorReading> out;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != kReadingCols.size()) {
            throw SchemaError("readings csv line " + std::to_string(line_no) + ": expected 5 fields, found " +
                              std::to_string(f.size()));
        }
        SensorReading r;
        try {
            r.created_at = parse_timestamp(f[0]);
        } catch (const DomainError& e) {
            throw SchemaError("readings csv line " + std::to_string(line_no) + ", column 'created_at': " + e.what());
        }
        r.pm10 = csv::parse_float(f[1], line_no, kReadingCols[1]);
        r.pm25 = csv::parse_float(f[2], line_no, kReadingCols[2]);
        r.temp = csv::parse_float(f[3], line_no, kReadingCols[3]);
        r.rh = csv::parse_float(f[4], line_no, kReadingCols[4]);
        out.push_back(r);
    }
    return out;
}

std::string series_to_json(const DeviceSeries& s) {
    nlohmann::ordered_json doc;
    doc["device_id"] = s.device_id;
    doc["agg"] = to_string(s.agg);
    auto& pts = doc["points"] = nlohmann::ordered_json::array();
    for (const SeriesPoint& p : s.points) {
        nlohmann::ordered_json row;
        row["t"] = format_iso8601(p.t);
        row["n"] = p.n;
        row["pm10"] = p.pm10;
        row["pm25"] = p.pm25;
        row["temp"] = p.temp;
        row["rh"] = p.rh;
        pts.push_back(std::move(row));
    }
    return doc.dump();
}

std::string devices_to_json(const std::vector<DeviceInfo>& devices) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const DeviceInfo& d : devices) {
        nlohmann::ordered_json row;
        row["device_id"] = d.device_id;
        row["lat"] = d.location ? nlohmann::ordered_json(d.location->lat) : nlohmann::ordered_json();
        row["lon"] = d.location ? nlohmann::ordered_json(d.location->lon) : nlohmann::ordered_json();
        row["type"] = d.type ? nlohmann::ordered_json(std::string(to_string(*d.type))) : nlohmann::ordered_json();
        row["count"] = d.count;
        row["first"] = d.first ? nlohmann::ordered_json(format_iso8601(*d.first)) : nlohmann::ordered_json();
        row["last"] = d.last ? nlohmann::ordered_json(format_iso8601(*d.last)) : nlohmann::ordered_json();
        doc.push_back(std::move(row));
    }
    return doc.dump();
}

}  // namespace aqnet::gateway
