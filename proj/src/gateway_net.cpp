#include "aqnet/gateway_net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include "httplib.h"

namespace aqnet::gateway {

namespace {

bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r == 0) return false;
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool write_exact(int fd, const std::uint8_t* buf, std::size_t n) {
    std::size_t sent = 0;
    while (sent < n) {
        const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

std::uint32_t le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        addrinfo* res = nullptr;
        if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
            throw Error("cannot resolve host " + host);
        }
        addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
        ::freeaddrinfo(res);
    }
    return addr;
}

}  // namespace

// ---------------------------------------------------------------------------
// IngestServer

IngestServer::IngestServer(Store& store) : store_(store) {}

IngestServer::~IngestServer() { stop(); }

std::uint16_t IngestServer::start(const std::string& host, std::uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = resolve(host, port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        const std::string msg = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error("bind " + host + ":" + std::to_string(port) + ": " + msg);
    }
    if (::listen(listen_fd_, 64) < 0) throw Error(std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    return ntohs(addr.sin_port);
}

void IngestServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    {
        std::lock_guard lock(conn_mu_);
        for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
}

void IngestServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            break;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(conn_mu_);
        conn_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void IngestServer::serve_connection(int fd) {
    std::vector<std::uint8_t> buf;
    std::array<std::uint8_t, 4> prefix{};
    while (running_ && read_exact(fd, prefix.data(), prefix.size())) {
        const std::uint32_t n = le32(prefix.data());
        if (n > device::kMaxStreamFrame) {
            const auto ack = device::encode_ack(static_cast<std::uint8_t>(device::FrameError::BadLength), 0);
            write_exact(fd, ack.data(), ack.size());
            break;
        }
        buf.resize(n);
        if (!read_exact(fd, buf.data(), n)) break;
        const auto result = store_.handle_frame(buf);
        std::array<std::uint8_t, device::kAckSize> ack{};
        if (const auto* ok = std::get_if<Ack>(&result)) {
            ack = device::encode_ack(0, ok->accepted);
        } else {
            ack = device::encode_ack(static_cast<std::uint8_t>(std::get<device::FrameError>(result)), 0);
        }
        if (!write_exact(fd, ack.data(), ack.size())) break;
    }
    std::lock_guard lock(conn_mu_);
    std::erase(conn_fds_, fd);
    ::close(fd);
}

// ---------------------------------------------------------------------------
// IngestClient

IngestClient::IngestClient(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr = resolve(host, port);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        const std::string msg = std::strerror(errno);
        ::close(fd_);
        fd_ = -1;
        throw Error("connect " + host + ":" + std::to_string(port) + ": " + msg);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

IngestClient::~IngestClient() {
    if (fd_ >= 0) ::close(fd_);
}

IngestClient::Reply IngestClient::send(std::span<const std::uint8_t> frame) {
    const auto prefix = device::length_prefix(frame.size());
    if (!write_exact(fd_, prefix.data(), prefix.size()) || !write_exact(fd_, frame.data(), frame.size())) {
        throw Error("ingest connection closed while sending");
    }
    std::array<std::uint8_t, device::kAckSize> ack{};
    if (!read_exact(fd_, ack.data(), ack.size())) throw Error("ingest connection closed before ack");
    return {ack[0], le32(ack.data() + 1)};
}

// ---------------------------------------------------------------------------
// QueryServer

struct QueryServer::Impl {
    const Store& store;
    httplib::Server server;
    std::thread thread;

    explicit Impl(const Store& s) : store(s) {}
};

namespace {

Timestamp param_time(const httplib::Request& req, const char* key, Timestamp fallback) {
    if (!req.has_param(key)) return fallback;
    return parse_timestamp(req.get_param_value(key));
}

DeviceId parse_device(const std::string& s) {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(s, &pos);
    if (pos != s.size() || v > 65535) throw DomainError("invalid device id '" + s + "'");
    return static_cast<DeviceId>(v);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const NotFound& e) {
        res.status = 404;
        res.set_content(std::string("{\"error\":\"") + e.what() + "\"}", "application/json");
    } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(std::string("{\"error\":\"") + e.what() + "\"}", "application/json");
    }
}

constexpr Timestamp kMaxTime = std::numeric_limits<std::int64_t>::max() / 2;

}  // namespace

QueryServer::QueryServer(const Store& store) : impl_(std::make_unique<Impl>(store)) {
    auto& srv = impl_->server;
    const Store& st = impl_->store;

    srv.Get("/devices", [&st](const httplib::Request&, httplib::Response& res) {
        res.set_content(devices_to_json(st.devices()), "application/json");
    });

    srv.Get(R"(/devices/(\d+)/series)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            QueryRequest q;
            q.device = parse_device(req.matches[1]);
            q.from = param_time(req, "from", 0);
            q.to = param_time(req, "to", kMaxTime);
            q.agg = req.has_param("agg") ? parse_aggregation(req.get_param_value("agg")) : Aggregation::Raw;
            const auto series = st.query_series(q);
            res.set_content(series_to_json(series.front()), "application/json");
        });
    });

    srv.Get(R"(/devices/(\d+)/export\.csv)", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::ostringstream out;
            st.export_csv(parse_device(req.matches[1]), param_time(req, "from", 0), param_time(req, "to", kMaxTime),
                          out);
            res.set_content(out.str(), "text/csv");
        });
    });
}

QueryServer::~QueryServer() { stop(); }

std::uint16_t QueryServer::start(const std::string& host, std::uint16_t port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) throw Error("cannot bind HTTP server on " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return static_cast<std::uint16_t>(bound);
}

void QueryServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace aqnet::gateway
