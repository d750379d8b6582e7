#pragma once

// Delimiter-separated text I/O used across the toolkit. Handles comma or tab
// delimiters and RFC-4180 style quoting within a line.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ktrace/common.hpp"

namespace kt::csv {

inline char detect_delimiter(const std::string& header_line) {
    return header_line.find('\t') != std::string::npos ? '\t' : ',';
}

inline void split_row(const std::string& line, char delim, std::vector<std::string>& out) {
    out.clear();
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(std::move(field));
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {
        std::string line;
        if (std::getline(in_, line)) {
            if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
                static_cast<unsigned char>(line[1]) == 0xBB &&
                static_cast<unsigned char>(line[2]) == 0xBF) {
                line.erase(0, 3);
            }
            delim_ = detect_delimiter(line);
            split_row(line, delim_, header_);
            has_header_ = true;
        }
    }

    bool has_header() const { return has_header_; }
    const std::vector<std::string>& header() const { return header_; }
    char delimiter() const { return delim_; }

    // -1 when the column is not present
    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (header_[i] == name) return static_cast<int>(i);
        }
        return -1;
    }

    bool next(std::vector<std::string>& row) {
        std::string line;
        while (std::getline(in_, line)) {
            if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
            split_row(line, delim_, row);
            return true;
        }
        return false;
    }

private:
    std::istream& in_;
    char delim_ = ',';
    bool has_header_ = false;
    std::vector<std::string> header_;
};

inline std::string quote_if_needed(const std::string& field, char delim) {
    if (field.find(delim) == std::string::npos && field.find('"') == std::string::npos &&
        field.find('\n') == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields, char delim = ',') {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << delim;
        os << quote_if_needed(fields[i], delim);
    }
    os << '\n';
}

}  // namespace kt::csv
