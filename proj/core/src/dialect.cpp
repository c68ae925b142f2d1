#include "curator/dialect.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "curator/error.hpp"

namespace curator {

namespace {

// Country-level codes for the regional dialects, then MSA.
const std::vector<std::string> kDefaultCodes = {
    "ALG", "BAH", "DJI", "EGY", "IRQ", "JOR", "KSA", "KUW", "LEB", "LIB", "MAU",
    "MOR", "OMA", "PAL", "QAT", "SOM", "SUD", "SYR", "TUN", "UAE", "YEM", "MSA",
};

}  // namespace

DialectCatalog DialectCatalog::default_catalog() { return from_codes(kDefaultCodes); }

DialectCatalog DialectCatalog::from_codes(std::vector<std::string> codes) {
    if (codes.size() != kDialectCount) {
        throw ValidationError("dialect catalog must list exactly " + std::to_string(kDialectCount) +
                              " codes, got " + std::to_string(codes.size()));
    }
    std::set<std::string> seen;
    std::vector<DialectLabel> labels;
    labels.reserve(codes.size());
    for (auto& c : codes) {
        if (c.empty()) throw ValidationError("dialect catalog contains an empty code");
        if (!seen.insert(c).second) throw ValidationError("duplicate dialect code '" + c + "'");
        labels.emplace_back(std::move(c));
    }
    if (!seen.contains(std::string(kMsaCode))) {
        throw ValidationError("dialect catalog must contain MSA");
    }
    return DialectCatalog(std::move(labels));
}

DialectCatalog DialectCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dialect list " + path.string());
    std::vector<std::string> codes;
    std::string line;
    while (std::getline(in, line)) {
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        auto e = line.find_last_not_of(" \t\r");
        codes.push_back(line.substr(b, e - b + 1));
    }
    return from_codes(std::move(codes));
}

bool DialectCatalog::contains(std::string_view code) const { return find(code).has_value(); }

std::optional<DialectLabel> DialectCatalog::find(std::string_view code) const {
    auto it = std::find_if(labels_.begin(), labels_.end(),
                           [&](const DialectLabel& l) { return l.code() == code; });
    if (it == labels_.end()) return std::nullopt;
    return *it;
}

DialectLabel DialectCatalog::parse(std::string_view code) const {
    auto l = find(code);
    if (!l) throw ValidationError("unknown dialect code '" + std::string(code) + "'");
    return *l;
}

}  // namespace curator
