#include "stsm/csv.hpp"

#include <fstream>
#include <sstream>

namespace stsm::csv {

namespace {
std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file: " + path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty file: " + path);
    t.header = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != t.header.size())
            throw FormatError("row width mismatch in " + path + " (expected " +
                              std::to_string(t.header.size()) + " cells, got " +
                              std::to_string(cells.size()) + ")");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

void write_file(const std::string& path, const Table& table) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path);
    for (std::size_t i = 0; i < table.header.size(); ++i)
        out << (i ? "," : "") << table.header[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

double to_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad numeric value '" + s + "' in " + context);
    }
}

long to_long(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad integer value '" + s + "' in " + context);
    }
}

}  // namespace stsm::csv
