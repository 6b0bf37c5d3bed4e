#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "aqnet/gateway.hpp"

namespace aqnet::gateway {

/// TCP listener for length-prefixed frames. One thread per connection; malformed frames are
/// rejected with an error ack and the connection stays open. A length prefix larger than the
/// largest legal frame closes the connection, since the stream cannot be resynchronised.
class IngestServer {
public:
    explicit IngestServer(Store& store);
    ~IngestServer();

    IngestServer(const IngestServer&) = delete;
    IngestServer& operator=(const IngestServer&) = delete;

    /// Binds and starts accepting. Port 0 picks a free port; returns the bound port.
    std::uint16_t start(const std::string& host, std::uint16_t port);
    void stop();

private:
    void accept_loop();
    void serve_connection(int fd);

    Store& store_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::vector<int> conn_fds_;
    std::vector<std::thread> workers_;
};

/// Blocking client used by devices (and tests) to push frames.
class IngestClient {
public:
    IngestClient(const std::string& host, std::uint16_t port);
    ~IngestClient();

    IngestClient(const IngestClient&) = delete;
    IngestClient& operator=(const IngestClient&) = delete;

    struct Reply {
        std::uint8_t status = 0;  // 0 = accepted, else device::FrameError
        std::uint32_t count = 0;
    };

    /// Sends one frame (length prefix added here) and waits for its ack.
    Reply send(std::span<const std::uint8_t> frame);

private:
    int fd_ = -1;
};

/// HTTP query API:
///   GET /devices
///   GET /devices/{id}/series?from=&to=&agg=raw|10min|hourly
///   GET /devices/{id}/export.csv?from=&to=
class QueryServer {
public:
    explicit QueryServer(const Store& store);
    ~QueryServer();

    QueryServer(const QueryServer&) = delete;
    QueryServer& operator=(const QueryServer&) = delete;

    /// Port 0 picks a free port; returns the bound port. Serves on a background thread.
    std::uint16_t start(const std::string& host, std::uint16_t port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace aqnet::gateway
