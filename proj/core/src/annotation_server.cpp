#include "curator/annotation_server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "curator/file_util.hpp"

namespace curator {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

const char* reason_code(RatingRejected::Reason r) {
    switch (r) {
        case RatingRejected::Reason::out_of_range: return "out_of_range";
        case RatingRejected::Reason::off_grid: return "off_grid";
        case RatingRejected::Reason::unknown_item: return "unknown_item";
        case RatingRejected::Reason::unknown_session: return "unknown_session";
    }
    return "rejected";
}

int reason_status(RatingRejected::Reason r) {
    return r == RatingRejected::Reason::unknown_item || r == RatingRejected::Reason::unknown_session ? 404 : 400;
}

json session_payload(const RatingStore& store, const std::string& token) {
    const auto presented = store.presented_items(token);
    json items = json::array();
    std::size_t done = 0;
    for (const auto& p : presented) {
        items.push_back({{"item_id", p.item_id},
                         {"order_index", p.order_index},
                         {"rated", p.rated},
                         {"audio_url", "/audio/" + p.item_id}});
        done += p.rated ? 1 : 0;
    }
    const auto next = store.next_unrated(token);
    return {{"token", token},
            {"items", items},
            {"rated_count", done},
            {"next_index", next ? json(*next) : json(nullptr)},
            {"completed", !next.has_value()}};
}

}  // namespace

struct AnnotationServer::Impl {
    RatingStore& store;
    ServerConfig config;
    httplib::Server server;
    std::thread worker;
    int port = -1;

    Impl(RatingStore& s, ServerConfig c) : store(s), config(std::move(c)) {}
    void routes();
};

void AnnotationServer::Impl::routes() {
    server.Get("/config", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  {{"scale_label", config.scale_label}, {"guideline", config.guideline}, {"grid", rating_grid()}});
    });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("annotator_id") ||
            !body["annotator_id"].is_string()) {
            send_error(res, 400, "bad_request", "expected {\"annotator_id\": string, \"seed\"?: integer}");
            return;
        }
        std::uint64_t seed = 0;
        if (body.contains("seed")) {
            if (!body["seed"].is_number_unsigned()) {
                send_error(res, 400, "bad_request", "seed must be a non-negative integer");
                return;
            }
            seed = body["seed"].get<std::uint64_t>();
        } else {
            seed = std::random_device{}();
        }
        try {
            const auto s = store.create_session(body["annotator_id"].get<std::string>(), seed);
            json out = session_payload(store, s.token);
            out["seed"] = s.seed;
            send_json(res, 201, out);
        } catch (const ValidationError& e) {
            send_error(res, 400, "bad_request", e.what());
        }
    });

    server.Get(R"(/sessions/([^/]+)/items)", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, 200, session_payload(store, req.matches[1]));
        } catch (const RatingRejected& e) {
            send_error(res, reason_status(e.reason()), reason_code(e.reason()), e.what());
        }
    });

    server.Post(R"(/sessions/([^/]+)/ratings)", [this](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("item_id") || !body["item_id"].is_string() ||
            !body.contains("value") || !body["value"].is_number()) {
            send_error(res, 400, "bad_request", "expected {\"item_id\": string, \"value\": number}");
            return;
        }
        try {
            const auto r = store.submit_rating(req.matches[1], body["item_id"].get<std::string>(),
                                               body["value"].get<double>());
            const auto next = store.next_unrated(r.session);
            send_json(res, 200,
                      {{"accepted", true},
                       {"item_id", r.item_id},
                       {"value", r.value},
                       {"timestamp", r.timestamp},
                       {"next_index", next ? json(*next) : json(nullptr)},
                       {"completed", !next.has_value()}});
        } catch (const RatingRejected& e) {
            send_error(res, reason_status(e.reason()), reason_code(e.reason()), e.what());
        } catch (const IoError& e) {
            spdlog::error("rating not persisted: {}", e.what());
            send_error(res, 500, "storage", "rating not persisted");
        }
    });

    server.Get(R"(/audio/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto item = store.item(req.matches[1]);
        if (!item) {
            send_error(res, 404, "unknown_item", "unknown item");
            return;
        }
        try {
            res.set_content(read_file(item->audio_path), "audio/wav");
        } catch (const IoError& e) {
            spdlog::error("audio for {}: {}", item->item_id, e.what());
            send_error(res, 500, "audio_unavailable", "audio unavailable");
        }
    });

    // Operator endpoints; the summary is aggregate data, not per-item.
    server.Get("/summary", [this](const httplib::Request&, httplib::Response& res) {
        json rows = json::array();
        for (const auto& m : store.summary().models) {
            rows.push_back({{"model_name", m.model},
                            {"mos", m.mean ? json(*m.mean) : json(nullptr)},
                            {"count", m.count},
                            {"std", m.stddev ? json(*m.stddev) : json(nullptr)},
                            {"no_data", !m.mean.has_value()}});
        }
        send_json(res, 200, {{"models", rows}});
    });

    server.Get("/export.csv", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(export_mos(store.summary()), "text/csv");
    });
}

AnnotationServer::AnnotationServer(RatingStore& store, ServerConfig config)
    : impl_(std::make_unique<Impl>(store, std::move(config))) {
    impl_->routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
    auto& i = *impl_;
    if (i.config.port == 0) {
        i.port = i.server.bind_to_any_port(i.config.host);
    } else {
        i.port = i.server.bind_to_port(i.config.host, i.config.port) ? i.config.port : -1;
    }
    if (i.port < 0) throw IoError("cannot bind " + i.config.host + ":" + std::to_string(i.config.port));
    return i.port;
}

void AnnotationServer::serve() { impl_->server.listen_after_bind(); }

int AnnotationServer::start() {
    const int port = bind();
    impl_->worker = std::thread([this] { serve(); });
    impl_->server.wait_until_ready();
    return port;
}

void AnnotationServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace curator
