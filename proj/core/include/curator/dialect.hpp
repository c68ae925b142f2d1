#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace curator {

/// A dialect code drawn from a DialectCatalog. Construction does not check
/// membership; use DialectCatalog::parse for validated labels.
class DialectLabel {
public:
    DialectLabel() = default;
    explicit DialectLabel(std::string code) : code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

    friend auto operator<=>(const DialectLabel&, const DialectLabel&) = default;
    friend bool operator==(const DialectLabel&, const DialectLabel&) = default;

private:
    std::string code_;
};

inline constexpr std::string_view kMsaCode = "MSA";
inline constexpr std::size_t kDialectCount = 22;

/// The closed set of 22 dialect codes (21 regional + MSA).
///
/// The default list uses three-letter country codes. A deployment with a
/// different classifier ensemble can load its own list (one code per line),
/// but it must still contain exactly 22 distinct codes including MSA.
class DialectCatalog {
public:
    static DialectCatalog default_catalog();
    static DialectCatalog from_codes(std::vector<std::string> codes);
    static DialectCatalog load(const std::filesystem::path& path);

    /// Codes in catalog order (this is also the order tokens are appended to a
    /// vocabulary).
    const std::vector<DialectLabel>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }

    bool contains(std::string_view code) const;
    std::optional<DialectLabel> find(std::string_view code) const;
    /// Throws ValidationError for codes outside the catalog.
    DialectLabel parse(std::string_view code) const;

private:
    explicit DialectCatalog(std::vector<DialectLabel> labels) : labels_(std::move(labels)) {}
    std::vector<DialectLabel> labels_;
};

}  // namespace curator
