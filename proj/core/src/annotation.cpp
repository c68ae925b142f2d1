#include "curator/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "curator/corpus.hpp"
#include "curator/csv.hpp"
#include "curator/file_util.hpp"
#include "curator/random.hpp"

namespace curator {

using nlohmann::json;

std::vector<AnnotationItem> load_items(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_array()) throw ConfigError(path.string() + ": expected a JSON array of items");
    std::vector<AnnotationItem> items;
    for (const auto& e : j) {
        AnnotationItem it;
        try {
            it.item_id = e.at("item_id").get<std::string>();
            it.audio_path = e.at("audio_path").get<std::string>();
            it.model_name = e.at("model_name").get<std::string>();
        } catch (const json::exception& ex) {
            throw ConfigError(path.string() + ": " + ex.what());
        }
        std::filesystem::path p(it.audio_path);
        if (p.is_relative()) it.audio_path = (path.parent_path() / p).string();
        items.push_back(std::move(it));
    }
    return items;
}

std::vector<double> rating_grid() {
    std::vector<double> g;
    for (int half = 2; half <= 10; ++half) g.push_back(half / 2.0);
    return g;
}

std::optional<std::string> rating_problem(double value) {
    if (!(value >= kMinRating && value <= kMaxRating)) return "out of range";
    const double twice = value * 2.0;
    if (twice != std::nearbyint(twice)) return "not on 0.5 grid";
    return std::nullopt;
}

std::vector<std::string> presentation_order(std::span<const AnnotationItem> items, std::uint64_t seed) {
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& it : items) ids.push_back(it.item_id);
    std::mt19937_64 rng(seed);
    portable_shuffle(ids, rng);
    return ids;
}

MosSummary mos_summary(std::span<const Rating> log, std::span<const AnnotationItem> items) {
    std::unordered_map<std::string, const AnnotationItem*> by_id;
    MosSummary summary;
    std::map<std::string, std::size_t> model_row;
    for (const auto& it : items) {
        by_id.emplace(it.item_id, &it);
        if (model_row.emplace(it.model_name, summary.models.size()).second) {
            summary.models.push_back({it.model_name, std::nullopt, 0, std::nullopt});
        }
    }

    std::map<std::pair<std::string, std::string>, double> latest;
    for (const auto& r : log) {
        if (by_id.contains(r.item_id)) latest[{r.annotator_id, r.item_id}] = r.value;
    }

    std::vector<std::vector<double>> values(summary.models.size());
    for (const auto& [key, v] : latest) values[model_row[by_id.at(key.second)->model_name]].push_back(v);

    for (std::size_t m = 0; m < summary.models.size(); ++m) {
        const auto& vs = values[m];
        auto& row = summary.models[m];
        row.count = vs.size();
        if (vs.empty()) continue;
        double sum = 0.0;
        for (double v : vs) sum += v;
        const double mean = sum / static_cast<double>(vs.size());
        double sq = 0.0;
        for (double v : vs) sq += (v - mean) * (v - mean);
        row.mean = mean;
        row.stddev = std::sqrt(sq / static_cast<double>(vs.size()));
    }
    return summary;
}

std::string export_mos(const MosSummary& summary) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::string out = "model_name,mos,count,std\n";
    for (const auto& m : summary.models) {
        out += csv_field(m.model);
        out += ',';
        if (m.mean) out += num(*m.mean);
        out += ',';
        out += std::to_string(m.count);
        out += ',';
        if (m.stddev) out += num(*m.stddev);
        out += '\n';
    }
    return out;
}

namespace {

json session_to_json(const Session& s) {
    return {{"token", s.token}, {"annotator_id", s.annotator_id}, {"seed", s.seed}, {"order", s.order}};
}

Session session_from_json(const json& j) {
    return {j.at("token").get<std::string>(), j.at("annotator_id").get<std::string>(),
            j.at("seed").get<std::uint64_t>(), j.at("order").get<std::vector<std::string>>()};
}

json rating_to_json(const Rating& r) {
    return {{"session", r.session},
            {"annotator_id", r.annotator_id},
            {"item_id", r.item_id},
            {"value", r.value},
            {"timestamp", r.timestamp}};
}

Rating rating_from_json(const json& j) {
    return {j.at("session").get<std::string>(), j.at("annotator_id").get<std::string>(),
            j.at("item_id").get<std::string>(), j.at("value").get<double>(), j.at("timestamp").get<std::string>()};
}

std::string new_token() {
    std::random_device rd;
    static const char* hex = "0123456789abcdef";
    std::string t;
    for (int i = 0; i < 4; ++i) {
        std::uint32_t x = rd();
        for (int k = 0; k < 8; ++k) {
            t.push_back(hex[x & 0xf]);
            x >>= 4;
        }
    }
    return t;
}

}  // namespace

RatingStore::RatingStore(std::filesystem::path dir, std::vector<AnnotationItem> items, std::size_t snapshot_every)
    : dir_(std::move(dir)), items_(std::move(items)), snapshot_every_(std::max<std::size_t>(snapshot_every, 1)) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!item_index_.emplace(items_[i].item_id, i).second) {
            throw ValidationError("duplicate annotation item id '" + items_[i].item_id + "'");
        }
    }
    std::filesystem::create_directories(dir_);
    replay();
    const auto log = dir_ / "events.jsonl";
    log_fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (log_fd_ < 0) throw IoError("cannot open " + log.string() + ": " + std::strerror(errno));
}

RatingStore::~RatingStore() {
    if (log_fd_ >= 0) ::close(log_fd_);
}

void RatingStore::replay() {
    const auto snap = dir_ / "snapshot.json";
    std::size_t covered = 0;
    if (std::filesystem::exists(snap)) {
        json j = json::parse(read_file(snap), nullptr, false);
        if (j.is_discarded()) throw IoError("corrupt snapshot " + snap.string());
        covered = j.at("events").get<std::size_t>();
        for (const auto& s : j.at("sessions")) {
            session_index_[s.at("token").get<std::string>()] = sessions_.size();
            sessions_.push_back(session_from_json(s));
        }
        for (const auto& r : j.at("ratings")) ratings_.push_back(rating_from_json(r));
    }

    const auto log = dir_ / "events.jsonl";
    if (!std::filesystem::exists(log)) {
        events_ = covered;
        return;
    }
    std::string content = read_file(log);
    // A crash mid-append can leave a torn final line; drop it so the next
    // append starts on a fresh line.
    if (!content.empty() && content.back() != '\n') {
        const auto keep = content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1;
        spdlog::warn("{}: discarding torn trailing event", log.string());
        std::filesystem::resize_file(log, keep);
        content.resize(keep);
    }
    std::istringstream in(content);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++n;
        if (n <= covered) continue;
        json e = json::parse(line, nullptr, false);
        if (e.is_discarded()) throw IoError(log.string() + ": corrupt event at line " + std::to_string(n));
        const auto type = e.value("type", "");
        if (type == "session") {
            auto s = session_from_json(e);
            session_index_[s.token] = sessions_.size();
            sessions_.push_back(std::move(s));
        } else if (type == "rating") {
            ratings_.push_back(rating_from_json(e));
        } else {
            throw IoError(log.string() + ": unknown event type at line " + std::to_string(n));
        }
    }
    events_ = std::max(n, covered);
}

void RatingStore::append_event(const std::string& line) {
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
        ssize_t w = ::write(log_fd_, p, left);
        if (w < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("rating log write failed: ") + std::strerror(errno));
        }
        p += w;
        left -= static_cast<std::size_t>(w);
    }
    if (::fsync(log_fd_) != 0) throw IoError(std::string("rating log fsync failed: ") + std::strerror(errno));
    ++events_;
    if (++events_since_snapshot_ >= snapshot_every_) {
        json sessions = json::array(), ratings = json::array();
        for (const auto& s : sessions_) sessions.push_back(session_to_json(s));
        for (const auto& r : ratings_) ratings.push_back(rating_to_json(r));
        write_file_atomic(dir_ / "snapshot.json",
                          json{{"events", events_}, {"sessions", sessions}, {"ratings", ratings}}.dump());
        events_since_snapshot_ = 0;
    }
}

void RatingStore::write_snapshot() {
    std::lock_guard lock(mu_);
    json sessions = json::array(), ratings = json::array();
    for (const auto& s : sessions_) sessions.push_back(session_to_json(s));
    for (const auto& r : ratings_) ratings.push_back(rating_to_json(r));
    write_file_atomic(dir_ / "snapshot.json", json{{"events", events_}, {"sessions", sessions}, {"ratings", ratings}}.dump());
    events_since_snapshot_ = 0;
}

Session RatingStore::create_session(const std::string& annotator_id, std::uint64_t seed) {
    if (items_.empty()) throw ValidationError("cannot create a session without items");
    if (annotator_id.empty()) throw ValidationError("annotator_id is required");
    Session s{new_token(), annotator_id, seed, presentation_order(items_, seed)};
    json e = session_to_json(s);
    e["type"] = "session";
    std::lock_guard lock(mu_);
    // State first, then the event: append_event may snapshot and must see it.
    session_index_[s.token] = sessions_.size();
    sessions_.push_back(s);
    try {
        append_event(e.dump());
    } catch (...) {
        sessions_.pop_back();
        session_index_.erase(s.token);
        throw;
    }
    return s;
}

Rating RatingStore::submit_rating(const std::string& token, const std::string& item_id, double value) {
    if (auto problem = rating_problem(value)) {
        throw RatingRejected(*problem == "out of range" ? RatingRejected::Reason::out_of_range
                                                        : RatingRejected::Reason::off_grid,
                             *problem);
    }
    std::lock_guard lock(mu_);
    auto s = session_index_.find(token);
    if (s == session_index_.end()) throw RatingRejected(RatingRejected::Reason::unknown_session, "unknown session");
    const Session& session = sessions_[s->second];
    if (std::find(session.order.begin(), session.order.end(), item_id) == session.order.end()) {
        throw RatingRejected(RatingRejected::Reason::unknown_item, "unknown item '" + item_id + "'");
    }
    Rating r{token, session.annotator_id, item_id, value, utc_timestamp()};
    json e = rating_to_json(r);
    e["type"] = "rating";
    ratings_.push_back(r);
    try {
        append_event(e.dump());
    } catch (...) {
        ratings_.pop_back();
        throw;
    }
    return r;
}

std::optional<Session> RatingStore::session(const std::string& token) const {
    std::lock_guard lock(mu_);
    auto it = session_index_.find(token);
    if (it == session_index_.end()) return std::nullopt;
    return sessions_[it->second];
}

std::vector<PresentedItem> RatingStore::presented_locked(const Session& s) const {
    std::vector<PresentedItem> out;
    out.reserve(s.order.size());
    for (std::size_t i = 0; i < s.order.size(); ++i) {
        const bool rated = std::any_of(ratings_.begin(), ratings_.end(), [&](const Rating& r) {
            return r.annotator_id == s.annotator_id && r.item_id == s.order[i];
        });
        out.push_back({s.order[i], i, rated});
    }
    return out;
}

std::vector<PresentedItem> RatingStore::presented_items(const std::string& token) const {
    std::lock_guard lock(mu_);
    auto it = session_index_.find(token);
    if (it == session_index_.end()) throw RatingRejected(RatingRejected::Reason::unknown_session, "unknown session");
    return presented_locked(sessions_[it->second]);
}

std::optional<std::size_t> RatingStore::next_unrated(const std::string& token) const {
    for (const auto& p : presented_items(token)) {
        if (!p.rated) return p.order_index;
    }
    return std::nullopt;
}

std::vector<Rating> RatingStore::ratings() const {
    std::lock_guard lock(mu_);
    return ratings_;
}

std::vector<Rating> RatingStore::history(const std::string& annotator_id, const std::string& item_id) const {
    std::lock_guard lock(mu_);
    std::vector<Rating> out;
    for (const auto& r : ratings_) {
        if (r.annotator_id == annotator_id && r.item_id == item_id) out.push_back(r);
    }
    return out;
}

MosSummary RatingStore::summary() const {
    std::lock_guard lock(mu_);
    return mos_summary(ratings_, items_);
}

std::optional<AnnotationItem> RatingStore::item(const std::string& item_id) const {
    auto it = item_index_.find(item_id);
    if (it == item_index_.end()) return std::nullopt;
    return items_[it->second];
}

}  // namespace curator
