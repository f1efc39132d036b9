#include "rival/fsutil.hpp"

#include <cstdio>
#include <sstream>

#include "rival/errors.hpp"

namespace rival {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<KvEntry> parse_key_value_lines(const std::string& text) {
    std::vector<KvEntry> entries;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::string stripped = trim(raw);
        if (stripped.empty()) continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw FormatError("line " + std::to_string(line) +
                              ": expected 'key = value'");
        KvEntry e;
        e.line = line;
        e.key = trim(stripped.substr(0, eq));
        e.value = trim(stripped.substr(eq + 1));
        if (e.key.empty())
            throw FormatError("line " + std::to_string(line) + ": empty key");
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace rival
