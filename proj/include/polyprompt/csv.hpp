#pragma once

#include <string>
#include <vector>

#include "polyprompt/errors.hpp"
#include "polyprompt/util.hpp"

namespace polyprompt {

// Minimal RFC-4180-style CSV. Quoted fields may contain commas, quotes
// (doubled) and newlines.

inline std::string csv_escape(const std::string& field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    out += '\n';
    return out;
}

inline std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    auto end_field = [&] {
        row.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(row);
        row.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            if (!field.empty() || !row.empty() || field_started) end_row();
        } else if (c == '\r') {
            // swallowed; \n drives row ends
        } else {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) throw MalformedCsv("unterminated quoted field");
    if (!field.empty() || !row.empty() || field_started) end_row();
    return rows;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    return parse_csv(read_file(path));
}

}  // namespace polyprompt
