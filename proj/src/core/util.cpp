#include "dxagent/core/util.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include <openssl/evp.h>
#include <zlib.h>

#include "dxagent/core/error.hpp"

namespace dxagent {

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view text) noexcept {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    return text;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(text.substr(start));
            break;
        }
        out.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool contains_word(std::string_view haystack, std::string_view needle) {
    const auto is_alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
        bool left_ok = pos == 0 || !is_alnum(haystack[pos - 1]);
        std::size_t end = pos + needle.size();
        // allow a plural 's' after the stem
        if (end < haystack.size() && haystack[end] == 's') ++end;
        bool right_ok = end >= haystack.size() || !is_alnum(haystack[end]);
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::IoError, "sha256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::optional<std::string> extract_json_object(std::string_view text) {
    std::optional<std::string_view> best;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        std::size_t j = i;
        for (; j < text.size(); ++j) {
            char c = text[j];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                if (--depth == 0) break;
            }
        }
        if (j >= text.size()) {
            // unbalanced from here; try the next opening brace
            ++i;
            continue;
        }
        auto candidate = text.substr(i, j - i + 1);
        if (!best || candidate.size() > best->size()) best = candidate;
        i = j + 1;  // top-level only: skip nested objects
    }
    if (!best) return std::nullopt;
    return std::string(*best);
}

namespace {

bool has_gzip_magic(std::string_view bytes) {
    return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
           static_cast<unsigned char>(bytes[1]) == 0x8b;
}

}  // namespace

std::string maybe_gunzip(std::string_view bytes, std::size_t max_bytes) {
    if (!has_gzip_magic(bytes)) {
        if (max_bytes != 0 && bytes.size() > max_bytes) bytes = bytes.substr(0, max_bytes);
        return std::string(bytes);
    }
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) fail(ErrorCode::IoError, "inflateInit2 failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    char buf[16384];
    int rc = Z_OK;
    while (rc == Z_OK) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            // a truncated stream still yields whatever was decoded
            if (rc == Z_BUF_ERROR) break;
            fail(ErrorCode::IoError, "corrupt gzip stream");
        }
        out.append(buf, sizeof(buf) - zs.avail_out);
        if (max_bytes != 0 && out.size() >= max_bytes) {
            out.resize(max_bytes);
            break;
        }
    }
    inflateEnd(&zs);
    return out;
}

std::string read_file_maybe_gzip(const std::filesystem::path& path, std::size_t max_bytes) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string out;
    char buf[16384];
    while (true) {
        unsigned want = sizeof(buf);
        if (max_bytes != 0) {
            if (out.size() >= max_bytes) break;
            want = static_cast<unsigned>(std::min<std::size_t>(want, max_bytes - out.size()));
        }
        int n = gzread(f, buf, want);
        if (n < 0) {
            gzclose(f);
            fail(ErrorCode::IoError, "read error in " + path.string());
        }
        if (n == 0) break;
        out.append(buf, static_cast<std::size_t>(n));
    }
    gzclose(f);
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::StorageFailure, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) fail(ErrorCode::StorageFailure, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::StorageFailure, "rename failed for " + path.string() + ": " + ec.message());
}

void append_line(const std::filesystem::path& path, std::string_view line) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) fail(ErrorCode::StorageFailure, "cannot append to " + path.string());
    out << line << '\n';
    out.flush();
    if (!out) fail(ErrorCode::StorageFailure, "short append to " + path.string());
}

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace dxagent
