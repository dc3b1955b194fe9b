#pragma once

#include <string>
#include <vector>

#include "stsm/common.hpp"

namespace stsm::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw FormatError("missing column '" + name + "'");
    }
};

Table read_file(const std::string& path);
void write_file(const std::string& path, const Table& table);

double to_double(const std::string& s, const std::string& context);
long to_long(const std::string& s, const std::string& context);

}  // namespace stsm::csv
