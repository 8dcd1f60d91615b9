#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ttp/error.hpp"
#include "ttp/text.hpp"

namespace ttp {

namespace detail {

inline bool tag_is(std::string_view name, std::initializer_list<std::string_view> set) {
    for (auto s : set)
        if (name == s) return true;
    return false;
}

inline void append_entity(std::string& out, std::string_view entity) {
    static const std::unordered_map<std::string_view, std::string_view> named = {
        {"amp", "&"},  {"lt", "<"},   {"gt", ">"},       {"quot", "\""},   {"apos", "'"},
        {"nbsp", " "}, {"#39", "'"},  {"ndash", "-"},    {"mdash", "-"},   {"rsquo", "'"},
        {"lsquo", "'"}, {"rdquo", "\""}, {"ldquo", "\""}, {"hellip", "..."},
    };
    if (auto it = named.find(entity); it != named.end()) {
        out += it->second;
        return;
    }
    if (entity.size() > 1 && entity[0] == '#') {
        unsigned long cp = 0;
        try {
            cp = (entity[1] == 'x' || entity[1] == 'X') ? std::stoul(std::string(entity.substr(2)), nullptr, 16)
                                                        : std::stoul(std::string(entity.substr(1)));
        } catch (...) {
            cp = 0;
        }
        if (cp == 0 || cp > 0x10FFFF) return;
        if (cp < 0x80) out.push_back(static_cast<char>(cp));
        else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
        return;
    }
    out += '&';
    out += entity;
    out += ';';
}

}  // namespace detail

/// Visible text of an HTML document. Script, style, nav, head and similar
/// subtrees are dropped; block-level elements end a line; entities decoded;
/// spaces collapsed within lines and blank lines removed.
inline std::string html_to_text(std::string_view html) {
    using detail::tag_is;
    std::string raw;
    raw.reserve(html.size());
    std::size_t i = 0;
    std::string skip_until;  // closing tag name of the subtree being dropped
    while (i < html.size()) {
        char c = html[i];
        if (c == '<') {
            if (html.compare(i, 4, "<!--") == 0) {
                auto end = html.find("-->", i + 4);
                i = end == std::string_view::npos ? html.size() : end + 3;
                continue;
            }
            auto end = html.find('>', i + 1);
            if (end == std::string_view::npos) break;
            std::string_view tag = html.substr(i + 1, end - i - 1);
            i = end + 1;
            bool closing = !tag.empty() && tag[0] == '/';
            if (closing) tag.remove_prefix(1);
            std::size_t name_len = 0;
            while (name_len < tag.size() && (text::is_ascii_alnum(tag[name_len]) || tag[name_len] == '!'))
                ++name_len;
            std::string name = text::to_lower(tag.substr(0, name_len));
            if (!skip_until.empty()) {
                if (closing && name == skip_until) skip_until.clear();
                continue;
            }
            bool self_closing = !tag.empty() && tag.back() == '/';
            if (!closing && !self_closing &&
                tag_is(name, {"script", "style", "nav", "noscript", "template", "svg", "head", "iframe"})) {
                skip_until = name;
                continue;
            }
            if (tag_is(name, {"br", "p", "div", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6", "tr",
                              "table", "section", "article", "header", "footer", "main", "aside", "blockquote",
                              "pre", "dl", "dt", "dd", "hr", "title", "form", "tbody", "thead"})) {
                raw.push_back('\n');
            } else if (tag_is(name, {"td", "th"})) {
                raw.push_back(' ');
            }
            continue;
        }
        if (!skip_until.empty()) {
            ++i;
            continue;
        }
        if (c == '&') {
            auto semi = html.find(';', i + 1);
            if (semi != std::string_view::npos && semi - i <= 10) {
                detail::append_entity(raw, html.substr(i + 1, semi - i - 1));
                i = semi + 1;
                continue;
            }
        }
        raw.push_back(c);
        ++i;
    }
    std::string out;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        auto nl = raw.find('\n', pos);
        if (nl == std::string::npos) nl = raw.size();
        std::string line = text::normalize_whitespace(std::string_view(raw).substr(pos, nl - pos));
        if (!line.empty()) {
            if (!out.empty()) out.push_back('\n');
            out += line;
        }
        pos = nl + 1;
    }
    return out;
}

/// Retrieves raw HTML for a URL. Implementations throw FetchError.
class PageFetcher {
public:
    virtual ~PageFetcher() = default;
    virtual std::string fetch(const std::string& url) = 0;
};

/// URL-keyed store of normalized page text. One file per URL named by the
/// SHA-256 hex digest of the URL, plus manifest.json mapping digests to
/// {url, fetched_at}. Writes for the same URL are serialized.
class PageCache {
public:
    explicit PageCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        auto manifest_path = dir_ / "manifest.json";
        if (std::filesystem::exists(manifest_path)) {
            try {
                manifest_ = nlohmann::json::parse(text::read_file(manifest_path));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError("corrupt page cache manifest: " + std::string(e.what()));
            }
        }
        if (!manifest_.is_object()) manifest_ = nlohmann::json::object();
    }

    static std::string digest(std::string_view url) { return text::sha256_hex(url); }

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path path_for(std::string_view url) const { return dir_ / digest(url); }

    std::optional<std::string> get(const std::string& url) const {
        auto p = path_for(url);
        if (!std::filesystem::exists(p)) return std::nullopt;
        return text::read_file(p);
    }

    void put(const std::string& url, std::string_view page_text,
             const std::string& fetched_at = text::utc_timestamp()) {
        auto lock = lock_for(url);
        store(url, page_text, fetched_at);
    }

    /// Cached text, or fetch + normalize + store while holding the URL's lock
    /// so concurrent callers for one URL fetch it once.
    std::string get_or_fetch(const std::string& url, PageFetcher* fetcher) {
        if (auto hit = get(url)) return *hit;
        auto lock = lock_for(url);
        if (auto hit = get(url)) return *hit;
        if (!fetcher) throw FetchError(url, "not in page cache and live fetching is disabled");
        std::string page = html_to_text(fetcher->fetch(url));
        store(url, page, text::utc_timestamp());
        return page;
    }

private:
    void store(const std::string& url, std::string_view page_text, const std::string& fetched_at) {
        text::write_file_atomic(path_for(url), page_text);
        std::lock_guard manifest_lock(manifest_mu_);
        manifest_[digest(url)] = {{"url", url}, {"fetched_at", fetched_at}};
        text::write_file_atomic(dir_ / "manifest.json", manifest_.dump(2) + "\n");
    }

    std::unique_lock<std::mutex> lock_for(const std::string& url) {
        std::mutex* mu;
        {
            std::lock_guard guard(locks_mu_);
            auto& slot = url_locks_[url];
            if (!slot) slot = std::make_unique<std::mutex>();
            mu = slot.get();
        }
        return std::unique_lock(*mu);
    }

public:
    nlohmann::json manifest() const {
        std::lock_guard lock(manifest_mu_);
        return manifest_;
    }

private:
    std::filesystem::path dir_;
    nlohmann::json manifest_;
    mutable std::mutex manifest_mu_;
    std::mutex locks_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> url_locks_;
};

/// Cached plain text for `url`; on a miss, fetches through `fetcher`
/// (nullptr means offline), normalizes, stores and returns it.
inline std::string fetch_page_text(const std::string& url, PageCache& cache, PageFetcher* fetcher) {
    return cache.get_or_fetch(url, fetcher);
}

}  // namespace ttp
