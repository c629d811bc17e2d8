#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/grid.hpp"
#include "blindsgp/io/files.hpp"

namespace blindsgp::io {

inline std::string fmt(double v, int digits = 10)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string join(const std::vector<std::string>& cells)
{
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
    return s + "\n";
}

inline std::vector<std::string> split(const std::string& line, char sep = ',')
{
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, sep)) out.push_back(cell);
    return out;
}

inline void write_truth_csv(const std::filesystem::path& path, const StarField& field)
{
    std::string s = "x_mas,y_mas,magnitude\n";
    for (const Star& st : field.stars) s += join({fmt(st.x_mas, 17), fmt(st.y_mas, 17), fmt(st.magnitude, 17)});
    write_file_atomic(path, s);
}

inline StarField read_truth_csv(const std::filesystem::path& path)
{
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("x_mas", 0) != 0) throw Error(path.string() + ": missing header");
    StarField field;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != 3) throw Error(path.string() + ": expected 3 columns");
        try {
            field.stars.push_back({std::stod(cells[0]), std::stod(cells[1]), std::stod(cells[2])});
        } catch (const std::exception&) {
            throw Error(path.string() + ": bad number in '" + line + "'");
        }
    }
    return field;
}

/// Star list from "x,y,m; x,y,m; ...".
inline StarField parse_star_list(const std::string& text)
{
    StarField field;
    for (const auto& entry : split(text, ';')) {
        if (entry.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cells = split(entry, ',');
        if (cells.size() != 3) throw Error("star list: expected x,y,mag in '" + entry + "'");
        try {
            field.stars.push_back({std::stod(cells[0]), std::stod(cells[1]), std::stod(cells[2])});
        } catch (const std::exception&) {
            throw Error("star list: bad number in '" + entry + "'");
        }
    }
    if (field.stars.empty()) throw Error("star list: no stars");
    return field;
}

}  // namespace blindsgp::io
