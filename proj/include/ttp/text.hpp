#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "ttp/error.hpp"

namespace ttp::text {

inline bool is_ascii_alnum(char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline char ascii_lower(char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
    return out;
}

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Collapses whitespace runs to a single space and trims both ends.
inline std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

/// Maximal runs of ASCII alphanumerics, lowercased.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && !is_ascii_alnum(s[i])) ++i;
        std::size_t start = i;
        while (i < s.size() && is_ascii_alnum(s[i])) ++i;
        if (i > start) tokens.push_back(to_lower(s.substr(start, i - start)));
    }
    return tokens;
}

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(digits[md[i] >> 4]);
        out.push_back(digits[md[i] & 0xF]);
    }
    return out;
}

/// Removes ATT&CK citation markup: "(Citation: ...)", markdown links become
/// their label, <code> tags are dropped, trailing "[n]" reference brackets go.
inline std::string strip_citations(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s.compare(i, 10, "(Citation:") == 0) {
            auto close = s.find(')', i);
            if (close == std::string_view::npos) break;
            i = close + 1;
            continue;
        }
        if (s[i] == '[') {
            // [label](target) -> label
            auto label_end = s.find(']', i + 1);
            if (label_end != std::string_view::npos && label_end + 1 < s.size() && s[label_end + 1] == '(') {
                auto target_end = s.find(')', label_end + 2);
                if (target_end != std::string_view::npos) {
                    out.append(s.substr(i + 1, label_end - i - 1));
                    i = target_end + 1;
                    continue;
                }
            }
        }
        if (s.compare(i, 6, "<code>") == 0) {
            i += 6;
            continue;
        }
        if (s.compare(i, 7, "</code>") == 0) {
            i += 7;
            continue;
        }
        out.push_back(s[i]);
        ++i;
    }
    std::string cleaned = normalize_whitespace(out);
    // trailing reference brackets such as "[1][2]"
    for (;;) {
        if (cleaned.empty() || cleaned.back() != ']') break;
        auto open = cleaned.rfind('[');
        if (open == std::string::npos) break;
        std::string_view inner(cleaned.data() + open + 1, cleaned.size() - open - 2);
        if (inner.empty() || !std::all_of(inner.begin(), inner.end(), [](char c) { return c >= '0' && c <= '9'; }))
            break;
        cleaned.erase(open);
        while (!cleaned.empty() && cleaned.back() == ' ') cleaned.pop_back();
    }
    return cleaned;
}

/// Offsets of every code point start in a UTF-8 string, plus a final
/// sentinel equal to the byte length. Stray continuation bytes count as
/// single characters.
inline std::vector<std::size_t> codepoint_offsets(std::string_view s) {
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    std::size_t i = 0;
    while (i < s.size()) {
        offsets.push_back(i);
        auto lead = static_cast<unsigned char>(s[i]);
        std::size_t width = 1;
        if (lead >= 0xF0) width = 4;
        else if (lead >= 0xE0) width = 3;
        else if (lead >= 0xC0) width = 2;
        std::size_t j = i + 1;
        while (j < s.size() && j < i + width && (static_cast<unsigned char>(s[j]) & 0xC0) == 0x80) ++j;
        i = j;
    }
    offsets.push_back(s.size());
    return offsets;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
    auto ms = std::chrono::time_point_cast<std::chrono::milliseconds>(t).time_since_epoch().count() % 1000;
    std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char frac[8];
    std::snprintf(frac, sizeof frac, ".%03dZ", static_cast<int>(ms));
    return std::string(buf, n) + frac;
}

}  // namespace ttp::text
