#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "dxagent/core/error.hpp"
#include "dxagent/service/engine.hpp"

namespace dxagent::service {

struct HttpOptions {
    std::optional<std::filesystem::path> static_dir;  // mounted at "/"
    std::chrono::milliseconds heartbeat{15000};      // SSE keep-alive comment interval
    std::size_t max_upload_bytes = 512u << 20;
};

/// HTTP status for an error code (422 validation, 404 missing, 409 state...).
int http_status_for(ErrorCode code) noexcept;

/// JSON API over an Engine:
///   POST /cases                      multipart (record, mri, vcf, mri_volumes) or JSON record
///   GET  /cases                      session ids
///   POST /cases/{id}/run[?wait=1]    start (202) or run to completion (200)
///   GET  /cases/{id}                 status, events, plan, outcomes, report
///   GET  /cases/{id}/events          server-sent events; resumes after Last-Event-ID or ?after=N
///   GET  /cases/{id}/report[?version=N]
///   POST /cases/{id}/chat            {"message": "..."}
///   GET  /cases/{id}/export?format=json|markdown[&version=N]
///   GET  /rules/patient-record, /tools, /schemas/plan, /schemas/report, /health
class HttpApi {
public:
    HttpApi(std::shared_ptr<Engine> engine, HttpOptions options = {});
    ~HttpApi();

    HttpApi(const HttpApi&) = delete;
    HttpApi& operator=(const HttpApi&) = delete;

    /// Binds and serves until stop(); returns false if binding failed.
    bool listen(const std::string& host, int port);
    /// Binds an ephemeral port and returns it (-1 on failure); then call serve().
    int bind_any_port(const std::string& host);
    bool serve();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dxagent::service
