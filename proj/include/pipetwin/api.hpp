#pragma once

// Local HTTP API under /api/v1. Every non-2xx body is an ApiError:
// {"status": <int>, "code": <string>, "message": <string>}.

#include "pipetwin/twin.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>

namespace pipetwin::api {

inline constexpr std::string_view kVersion = "0.1.0";

struct ApiError {
    int status = 500;
    std::string code;
    std::string message;

    nlohmann::json to_json() const;
};

/// Thrown by handlers; rendered as ApiError.
class HttpError : public Error {
public:
    HttpError(int status, std::string code, const std::string& message);

    const ApiError& error() const { return error_; }

private:
    ApiError error_;
};

struct ServerOptions {
    std::chrono::milliseconds sync_timeout{60000};
};

class Server {
public:
    explicit Server(twin::Twin& twin, ServerOptions options = {});
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds; port 0 picks a free one. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind.
    bool listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace pipetwin::api
