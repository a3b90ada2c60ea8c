#pragma once

// Small internal CSV helpers shared by manifest / predictions / report IO.
// Fields containing commas, quotes or newlines are double-quoted; embedded
// newlines inside fields are not supported.

#include <string>
#include <vector>

#include "busi/errors.hpp"

namespace busi::detail {

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> csv_split(const std::string& line, int line_number) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty()) {
                throw ParseError("line " + std::to_string(line_number) +
                                 ": unexpected quote inside unquoted field");
            }
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) {
        throw ParseError("line " + std::to_string(line_number) + ": unterminated quote");
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace busi::detail
