// Same feature macro as the gateway's client so every translation unit sees
// one definition of the httplib classes.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "dxagent/service/http_api.hpp"

#include <atomic>

#include "dxagent/planner/planner.hpp"

namespace dxagent::service {

using nlohmann::json;

int http_status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ValidationFailed:
        case ErrorCode::InvalidRecord:
        case ErrorCode::UnknownLabel:
            return 422;
        case ErrorCode::SessionNotFound: return 404;
        case ErrorCode::WrongState:
        case ErrorCode::NoReport:
            return 409;
        case ErrorCode::InvalidArgument: return 400;
        case ErrorCode::ProviderUnavailable: return 503;
        case ErrorCode::AuthFailure:
        case ErrorCode::ContextTooLong:
            return 502;
        default: return 500;
    }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    std::string message = e.what();
    const std::string code(to_string(e.code()));
    if (message.rfind(code + ": ", 0) == 0) message = message.substr(code.size() + 2);
    json body{{"error", code}, {"message", message}};
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
        json list = json::array();
        for (const auto& x : v->report().violations) list.push_back(x);
        body["violations"] = std::move(list);
        body["notices"] = v->report().notices;
    }
    send_json(res, http_status_for(e.code()), body);
}

template <class F>
void guarded(httplib::Response& res, F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, e);
    } catch (const json::exception& e) {
        send_error(res, Error(ErrorCode::InvalidArgument, e.what()));
    } catch (const std::exception& e) {
        send_error(res, Error(ErrorCode::StorageFailure, e.what()));
    }
}

int version_param(const httplib::Request& req) {
    if (!req.has_param("version")) return 0;
    const std::string v = req.get_param_value("version");
    try {
        std::size_t used = 0;
        const int n = std::stoi(v, &used);
        if (used == v.size() && n >= 0) return n;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidArgument, "version must be a non-negative integer");
}

bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

CaseRequest read_case_request(const httplib::Request& req) {
    CaseRequest out;
    if (req.is_multipart_form_data()) {
        if (!req.has_file("record")) fail(ErrorCode::InvalidRecord, "multipart body needs a 'record' part");
        out.record = parse_patient_record(req.get_file_value("record").content);
        for (const char* kind : {"mri", "vcf", "mri_volumes"})
            for (const auto& part : req.get_file_values(kind)) out.uploads.push_back({kind, part.filename, part.content});
    } else {
        if (req.body.empty()) fail(ErrorCode::InvalidRecord, "request body must be a patient record");
        out.record = parse_patient_record(req.body);
    }
    return out;
}

std::string sse_frame(const PipelineEvent& e) {
    return "id: " + std::to_string(e.sequence) + "\nevent: " + std::string(to_string(e.kind)) + "\ndata: " +
           json(e).dump() + "\n\n";
}

}  // namespace

struct HttpApi::Impl {
    std::shared_ptr<Engine> engine;
    HttpOptions options;
    httplib::Server server;
    std::atomic<bool> stopping{false};

    void routes();
};

void HttpApi::Impl::routes() {
    Engine& eng = *engine;
    server.set_payload_max_length(options.max_upload_bytes);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
        res.status = 204;
    });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

    server.Get("/rules/patient-record", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, patient_record_rule_manifest());
    });

    server.Get("/tools", [&eng](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, eng.registry().manifest());
    });

    server.Get("/schemas/plan", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, planner::plan_schema());
    });

    server.Get("/schemas/report", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, aggregator::report_schema());
    });

    server.Post("/cases", [&eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = eng.create_case_session(read_case_request(req));
            json body = to_summary_json(*eng.store().get(id));
            send_json(res, 201, {{"session_id", id}, {"status", body["status"]}, {"record", body["record"]},
                                 {"uploads", body["uploads"]}});
        });
    });

    server.Get("/cases", [&eng](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json list = json::array();
            for (const auto& id : eng.store().list()) {
                auto s = eng.store().get(id);
                list.push_back({{"session_id", id}, {"status", to_string(s->status)}, {"created_ms", s->created_ms}});
            }
            send_json(res, 200, list);
        });
    });

    server.Post(R"(/cases/([a-z0-9-]+)/run)", [&eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            if (req.has_param("wait") && truthy(req.get_param_value("wait"))) {
                eng.advance_pipeline(id);
                send_json(res, 200, to_summary_json(*eng.store().get(id)));
            } else {
                eng.start_pipeline(id);
                auto s = eng.store().get(id);
                send_json(res, 202, {{"session_id", id}, {"status", to_string(s->status)}});
            }
        });
    });

    server.Get(R"(/cases/([a-z0-9-]+))", [&eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = to_summary_json(*eng.store().get(req.matches[1].str()));
            body["running"] = eng.is_running(req.matches[1].str());
            send_json(res, 200, body);
        });
    });

    server.Get(R"(/cases/([a-z0-9-]+)/events)", [this, &eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            eng.store().get(id);  // 404 before the stream starts
            std::size_t after = 0;
            const std::string last = req.has_header("Last-Event-ID") ? req.get_header_value("Last-Event-ID")
                                                                      : req.get_param_value("after");
            if (!last.empty()) {
                try {
                    after = static_cast<std::size_t>(std::stoull(last));
                } catch (const std::exception&) {
                    fail(ErrorCode::InvalidArgument, "Last-Event-ID must be an event sequence number");
                }
            }
            auto sent = std::make_shared<std::size_t>(after);
            auto quiet = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, &eng, id, sent, quiet](std::size_t, httplib::DataSink& sink) {
                if (stopping) return false;
                auto snap = eng.store().wait_for_events(id, *sent, std::chrono::milliseconds(200));
                std::string out;
                while (*sent < snap->events.size()) out += sse_frame(snap->events[(*sent)++]);
                const bool finished = is_terminal(snap->status) && *sent >= snap->events.size();
                if (finished) out += "event: end\ndata: " + json{{"status", to_string(snap->status)}}.dump() + "\n\n";
                const auto now = std::chrono::steady_clock::now();
                if (out.empty() && now - *quiet >= options.heartbeat) out = ": keep-alive\n\n";
                if (!out.empty()) {
                    *quiet = now;
                    if (!sink.write(out.data(), out.size())) return false;
                }
                if (finished) sink.done();
                return true;
            });
        });
    });

    server.Get(R"(/cases/([a-z0-9-]+)/report)", [&eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            res.set_content(eng.export_report(req.matches[1], ExportFormat::json, version_param(req)), "application/json");
        });
    });

    server.Get(R"(/cases/([a-z0-9-]+)/export)", [&eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const auto format = parse_export_format(req.has_param("format") ? req.get_param_value("format") : "json");
            const std::string body = eng.export_report(id, format, version_param(req));
            const std::string ext = format == ExportFormat::json ? ".json" : ".md";
            res.set_header("Content-Disposition", "attachment; filename=\"" + id + "-report" + ext + "\"");
            res.set_content(body, std::string(content_type(format)));
        });
    });

    server.Post(R"(/cases/([a-z0-9-]+)/chat)", [&eng](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = json::parse(req.body, nullptr, false);
            if (!body.is_object() || !body.contains("message") || !body["message"].is_string())
                fail(ErrorCode::InvalidArgument, "body must be {\"message\": \"...\"}");
            send_json(res, 200, eng.chat_turn(req.matches[1], body["message"].get<std::string>()));
        });
    });

    if (options.static_dir && !server.set_mount_point("/", options.static_dir->string()))
        fail(ErrorCode::ConfigInvalid, "static directory not found: " + options.static_dir->string());
}

HttpApi::HttpApi(std::shared_ptr<Engine> engine, HttpOptions options) : impl_(std::make_unique<Impl>()) {
    if (!engine) fail(ErrorCode::InvalidArgument, "http api needs an engine");
    impl_->engine = std::move(engine);
    impl_->options = std::move(options);
    impl_->routes();
}

HttpApi::~HttpApi() { stop(); }

bool HttpApi::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpApi::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpApi::serve() { return impl_->server.listen_after_bind(); }

void HttpApi::stop() {
    impl_->stopping = true;
    impl_->server.stop();
}

void HttpApi::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace dxagent::service
