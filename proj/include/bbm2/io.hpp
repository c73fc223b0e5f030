#pragma once

// CSV/JSON-lines persistence and the config hash used in manifests.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bbm2/extremal.hpp"

namespace bbm2::io {

/// Shortest round-trip decimal for a double; "nan", "inf", "-inf" otherwise.
inline std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

class Csv {
public:
    explicit Csv(std::string_view header) { out_ << header << '\n'; }

    template <class... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    static std::string cell(double x) { return num(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(std::string_view s) { return std::string(s); }
    static std::string cell(const char* s) { return s; }
    static std::string cell(bool b) { return b ? "1" : "0"; }
    template <class I>
        requires std::is_integral_v<I>
    static std::string cell(I v) {
        return std::to_string(v);
    }

    std::ostringstream out_;
};

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << contents;
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical (sorted-key, compact) dump.
inline std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

// ---- centered measures ------------------------------------------------------

inline constexpr std::string_view kMeasureCsvHeader = "replica,x,t_u,x_at_tu";

inline std::string measures_csv(const std::vector<extremal::CenteredPointMeasure>& ms) {
    Csv csv(kMeasureCsvHeader);
    for (const auto& m : ms) {
        for (const auto& p : m.points) csv.row(m.replica, p.x, p.t_u, p.x_at_tu);
    }
    return csv.str();
}

// ---- decoration libraries ---------------------------------------------------

inline std::string library_jsonl(const extremal::DecorationLibrary& lib) {
    std::string out = nlohmann::json{{"rho", lib.rho},
                                     {"t_dec", lib.t_dec},
                                     {"n", lib.size()},
                                     {"seed", lib.seed},
                                     {"depth", lib.depth},
                                     {"attempts", lib.attempts}}
                          .dump();
    out += '\n';
    for (const auto& g : lib.gaps) {
        out += nlohmann::json(g).dump();
        out += '\n';
    }
    return out;
}

inline extremal::DecorationLibrary library_from_jsonl(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw InvalidParameter("decoration library: missing header line");
    const auto head = nlohmann::json::parse(line);
    extremal::DecorationLibrary lib;
    lib.rho = head.at("rho").get<double>();
    lib.t_dec = head.at("t_dec").get<double>();
    lib.seed = head.at("seed").get<std::uint64_t>();
    lib.depth = head.value("depth", lib.depth);
    lib.attempts = head.value("attempts", std::uint64_t{0});
    const auto n = head.at("n").get<std::size_t>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        lib.gaps.push_back(nlohmann::json::parse(line).get<std::vector<double>>());
    }
    if (lib.gaps.size() != n) {
        throw InvalidParameter("decoration library: header says " + std::to_string(n) + " vectors, found " +
                               std::to_string(lib.gaps.size()));
    }
    return lib;
}

}  // namespace bbm2::io
