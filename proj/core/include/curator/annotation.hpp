#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "curator/error.hpp"

namespace curator {

/// A clip in the listening test. model_name stays server-side.
struct AnnotationItem {
    std::string item_id;
    std::string audio_path;
    std::string model_name;
};

/// Items from a JSON array of {item_id, audio_path, model_name}; relative
/// audio paths resolve against the file's directory.
std::vector<AnnotationItem> load_items(const std::filesystem::path& path);

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 5.0;

/// {1.0, 1.5, ..., 5.0}
std::vector<double> rating_grid();

/// "out of range", "not on 0.5 grid", or nullopt for a valid rating.
std::optional<std::string> rating_problem(double value);

class RatingRejected : public ValidationError {
public:
    enum class Reason { out_of_range, off_grid, unknown_item, unknown_session };
    RatingRejected(Reason reason, const std::string& what) : ValidationError(what), reason_(reason) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

struct Rating {
    std::string session;
    std::string annotator_id;
    std::string item_id;
    double value = 0.0;
    std::string timestamp;

    friend bool operator==(const Rating&, const Rating&) = default;
};

struct Session {
    std::string token;
    std::string annotator_id;
    std::uint64_t seed = 0;
    std::vector<std::string> order;  // item ids in presentation order
};

/// What the client may see of an item: no model name, no file path.
struct PresentedItem {
    std::string item_id;
    std::size_t order_index = 0;
    bool rated = false;
};

/// Seeded permutation of item ids.
std::vector<std::string> presentation_order(std::span<const AnnotationItem> items, std::uint64_t seed);

struct ModelMos {
    std::string model;
    std::optional<double> mean;  // absent: no data
    std::size_t count = 0;
    std::optional<double> stddev;  // population standard deviation
};

struct MosSummary {
    std::vector<ModelMos> models;  // catalog order of first appearance
};

/// Per-model mean over the latest rating of each (annotator, item) pair in
/// log order. Ratings for items absent from `items` are ignored.
MosSummary mos_summary(std::span<const Rating> log, std::span<const AnnotationItem> items);

/// CSV `model_name,mos,count,std`; models without data get empty mos/std.
std::string export_mos(const MosSummary& summary);

/// Durable store behind the listening test. Every session creation and rating
/// is appended to `events.jsonl` and fsynced before the call returns; a
/// snapshot of the whole state is rewritten every `snapshot_every` events.
/// On construction, state is rebuilt from the snapshot plus the log tail.
/// All methods are thread-safe; writes are serialized.
class RatingStore {
public:
    RatingStore(std::filesystem::path dir, std::vector<AnnotationItem> items, std::size_t snapshot_every = 100);
    ~RatingStore();
    RatingStore(const RatingStore&) = delete;
    RatingStore& operator=(const RatingStore&) = delete;

    /// Throws ValidationError when there are no items.
    Session create_session(const std::string& annotator_id, std::uint64_t seed);

    /// Throws RatingRejected. Resubmission replaces the effective rating but
    /// the earlier one stays in the history.
    Rating submit_rating(const std::string& token, const std::string& item_id, double value);

    std::optional<Session> session(const std::string& token) const;
    /// Throws RatingRejected(unknown_session).
    std::vector<PresentedItem> presented_items(const std::string& token) const;
    /// Index of the first unrated item, or nullopt when everything is rated.
    std::optional<std::size_t> next_unrated(const std::string& token) const;

    std::vector<Rating> ratings() const;
    std::vector<Rating> history(const std::string& annotator_id, const std::string& item_id) const;
    MosSummary summary() const;

    const std::vector<AnnotationItem>& items() const noexcept { return items_; }
    std::optional<AnnotationItem> item(const std::string& item_id) const;

    void write_snapshot();

private:
    void append_event(const std::string& line);
    void replay();
    std::vector<PresentedItem> presented_locked(const Session& s) const;

    std::filesystem::path dir_;
    std::vector<AnnotationItem> items_;
    std::unordered_map<std::string, std::size_t> item_index_;
    std::size_t snapshot_every_;

    mutable std::mutex mu_;
    int log_fd_ = -1;
    std::size_t events_ = 0;
    std::size_t events_since_snapshot_ = 0;
    std::vector<Session> sessions_;
    std::unordered_map<std::string, std::size_t> session_index_;
    std::vector<Rating> ratings_;
};

}  // namespace curator
