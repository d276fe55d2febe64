#pragma once

// TCP control/telemetry endpoint. One newline-delimited JSON stream per
// client: commands in, frame/alert/state/error messages out. A slow client
// only loses its own frame messages.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "rtdet/broadcast.hpp"
#include "rtdet/session.hpp"

namespace rtdet {

class ServerError : public Error {
public:
    using Error::Error;
};

/// "host:port", ":port" or "port". Port 0 picks an ephemeral port.
struct ListenAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

inline ListenAddress parse_listen_address(const std::string& text) {
    ListenAddress a;
    std::string port = text;
    if (const auto colon = text.rfind(':'); colon != std::string::npos) {
        if (colon > 0) a.host = text.substr(0, colon);
        port = text.substr(colon + 1);
    }
    int value = -1;
    const auto* end = port.data() + port.size();
    const auto [ptr, ec] = std::from_chars(port.data(), end, value);
    if (port.empty() || ec != std::errc() || ptr != end || value < 0 || value > 65535) {
        throw InvalidArgument("invalid listen address '" + text + "'");
    }
    a.port = static_cast<std::uint16_t>(value);
    return a;
}

class ControlServer {
public:
    ControlServer(SessionController& controller, Broadcaster& broadcaster, const ListenAddress& addr,
                  std::size_t frame_buffer = Broadcaster::kDefaultFrameCapacity)
        : controller_(controller), broadcaster_(broadcaster), frame_buffer_(frame_buffer) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw ServerError(std::string("socket: ") + std::strerror(errno));
        const int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(addr.port);
        if (::inet_pton(AF_INET, addr.host == "localhost" ? "127.0.0.1" : addr.host.c_str(), &sa.sin_addr) != 1) {
            ::close(listen_fd_);
            throw InvalidArgument("invalid listen host '" + addr.host + "'");
        }
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 || ::listen(listen_fd_, 16) != 0) {
            const std::string why = std::strerror(errno);
            ::close(listen_fd_);
            throw ServerError("cannot listen on " + addr.host + ":" + std::to_string(addr.port) + ": " + why);
        }
        socklen_t len = sizeof sa;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
        port_ = ntohs(sa.sin_port);
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ControlServer(const ControlServer&) = delete;
    ControlServer& operator=(const ControlServer&) = delete;
    ~ControlServer() { stop(); }

    std::uint16_t bound_port() const noexcept { return port_; }

    std::size_t client_count() const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& c : clients_) n += c->alive.load() ? 1 : 0;
        return n;
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        if (acceptor_.joinable()) acceptor_.join();
        ::close(listen_fd_);
        std::lock_guard lock(mu_);
        for (auto& c : clients_) {
            ::shutdown(c->fd, SHUT_RDWR);
            c->sub->close();
        }
        for (auto& c : clients_) finish(*c);
        clients_.clear();
    }

private:
    struct Client {
        int fd = -1;
        std::shared_ptr<Subscription> sub;
        std::thread reader;
        std::thread writer;
        std::atomic<bool> alive{true};
    };

    static constexpr int kPollMs = 50;

    void accept_loop() {
        while (!stopping_.load()) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, kPollMs) <= 0) {
                reap();
                continue;
            }
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            auto c = std::make_unique<Client>();
            c->fd = fd;
            c->sub = broadcaster_.subscribe(frame_buffer_);
            const auto snap = controller_.snapshot();
            c->sub->push({MessageKind::State, state_message(*snap, controller_.class_names()).dump()});
            Client* raw = c.get();
            c->reader = std::thread([this, raw] { read_loop(*raw); });
            c->writer = std::thread([this, raw] { write_loop(*raw); });
            std::lock_guard lock(mu_);
            clients_.push_back(std::move(c));
        }
    }

    void reap() {
        std::lock_guard lock(mu_);
        for (auto it = clients_.begin(); it != clients_.end();) {
            if (!(*it)->alive.load()) {
                finish(**it);
                it = clients_.erase(it);
            } else {
                ++it;
            }
        }
    }

    static void finish(Client& c) {
        if (c.reader.joinable()) c.reader.join();
        if (c.writer.joinable()) c.writer.join();
        if (c.fd >= 0) ::close(c.fd);
        c.fd = -1;
    }

    void reply_error(Client& c, const std::string& error, const std::string& detail) {
        c.sub->push({MessageKind::Error, error_message(error, detail).dump()});
    }

    void handle_line(Client& c, const std::string& line) {
        if (line.empty()) return;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("cmd") || !j["cmd"].is_string()) {
            reply_error(c, "malformed", "expected {\"cmd\": ...}");
            return;
        }
        const auto name = j["cmd"].get<std::string>();
        const auto cmd = parse_command_name(name);
        if (!cmd) {
            reply_error(c, "unknown_command", name);
            return;
        }
        try {
            controller_.handle_control(*cmd);
        } catch (const InvalidTransition& e) {
            reply_error(c, "InvalidTransition", e.what());
        }
    }

    void read_loop(Client& c) {
        std::string pending;
        char buf[4096];
        while (!stopping_.load()) {
            pollfd p{c.fd, POLLIN, 0};
            const int r = ::poll(&p, 1, kPollMs);
            if (r == 0) continue;
            if (r < 0) break;
            const auto n = ::recv(c.fd, buf, sizeof buf, 0);
            if (n <= 0) break;
            pending.append(buf, static_cast<std::size_t>(n));
            for (auto nl = pending.find('\n'); nl != std::string::npos; nl = pending.find('\n')) {
                std::string line = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                handle_line(c, line);
            }
        }
        c.alive.store(false);
        c.sub->close();
    }

    void write_loop(Client& c) {
        for (;;) {
            auto msg = c.sub->pop(std::chrono::milliseconds(kPollMs));
            if (!msg) {
                if (c.sub->closed()) break;
                continue;
            }
            msg->line.push_back('\n');
            if (!send_all(c.fd, msg->line)) {
                c.alive.store(false);
                c.sub->close();
                ::shutdown(c.fd, SHUT_RDWR);
                break;
            }
        }
    }

    static bool send_all(int fd, const std::string& data) {
        std::size_t sent = 0;
        while (sent < data.size()) {
            const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) return false;
            sent += static_cast<std::size_t>(n);
        }
        return true;
    }

    SessionController& controller_;
    Broadcaster& broadcaster_;
    std::size_t frame_buffer_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    mutable std::mutex mu_;
    std::list<std::unique_ptr<Client>> clients_;
};

/// Minimal blocking client used by tests and the replay tooling.
class ControlClient {
public:
    ControlClient(const std::string& host, std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw ServerError(std::string("socket: ") + std::strerror(errno));
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(port);
        ::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &sa.sin_addr);
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
            const std::string why = std::strerror(errno);
            ::close(fd_);
            throw ServerError("connect: " + why);
        }
    }
    ControlClient(const ControlClient&) = delete;
    ControlClient& operator=(const ControlClient&) = delete;
    ~ControlClient() {
        if (fd_ >= 0) ::close(fd_);
    }

    void send_line(const std::string& line) {
        const std::string data = line + "\n";
        std::size_t sent = 0;
        while (sent < data.size()) {
            const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) throw ServerError("send failed");
            sent += static_cast<std::size_t>(n);
        }
    }

    void send_command(const std::string& cmd) { send_line(nlohmann::json{{"cmd", cmd}}.dump()); }

    /// Next line, or nullopt on timeout / disconnect.
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (const auto nl = pending_.find('\n'); nl != std::string::npos) {
                std::string line = pending_.substr(0, nl);
                pending_.erase(0, nl + 1);
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                    std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
            char buf[4096];
            const auto n = ::recv(fd_, buf, sizeof buf, 0);
            if (n <= 0) return std::nullopt;
            pending_.append(buf, static_cast<std::size_t>(n));
        }
    }

    /// Reads until a message satisfying `pred` arrives.
    template <class Pred>
    std::optional<nlohmann::json> wait_for(Pred&& pred, std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                    std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            auto line = read_line(left);
            if (!line) return std::nullopt;
            auto j = nlohmann::json::parse(*line, nullptr, false);
            if (!j.is_discarded() && pred(j)) return j;
        }
    }

private:
    int fd_ = -1;
    std::string pending_;
};

} // namespace rtdet
