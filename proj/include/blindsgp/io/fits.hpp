#pragma once

// Minimal FITS: one primary HDU, BITPIX = -64, NAXIS = 2, square image,
// optional PIXSCALE card (mas / px). Nothing else is read or written.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/grid.hpp"
#include "blindsgp/io/files.hpp"

namespace blindsgp::io {

inline constexpr std::size_t fits_block = 2880;
inline constexpr std::size_t fits_card = 80;

namespace detail {

inline std::string card(const std::string& key, const std::string& value, const std::string& comment = {})
{
    // Fixed-format: keyword in columns 1-8, "= " in 9-10, value right-justified to column 30.
    char buf[fits_card + 1];
    std::snprintf(buf, sizeof buf, "%-8.8s= %20s", key.c_str(), value.c_str());
    std::string s(buf);
    if (!comment.empty()) s += " / " + comment;
    s.resize(fits_card, ' ');
    return s;
}

inline std::string pad_to_block(std::string s, char fill)
{
    const std::size_t rem = s.size() % fits_block;
    if (rem != 0) s.append(fits_block - rem, fill);
    return s;
}

inline std::uint64_t to_big_endian(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::little) return __builtin_bswap64(v);
    return v;
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(' ');
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(' ') - b + 1);
}

}  // namespace detail

inline std::string encode_fits(const PixelGrid& g)
{
    std::string header;
    header += detail::card("SIMPLE", "T");
    header += detail::card("BITPIX", "-64");
    header += detail::card("NAXIS", "2");
    header += detail::card("NAXIS1", std::to_string(g.size()));
    header += detail::card("NAXIS2", std::to_string(g.size()));
    char scale[32];
    std::snprintf(scale, sizeof scale, "%.17G", g.pixel_scale());
    header += detail::card("PIXSCALE", scale, "mas per pixel");
    std::string end = "END";
    end.resize(fits_card, ' ');
    header += end;
    std::string out = detail::pad_to_block(header, ' ');

    std::string data(g.count() * 8, '\0');
    for (std::size_t i = 0; i < g.count(); ++i) {
        const std::uint64_t be = detail::to_big_endian(std::bit_cast<std::uint64_t>(g[i]));
        std::memcpy(data.data() + 8 * i, &be, 8);
    }
    out += detail::pad_to_block(std::move(data), '\0');
    return out;
}

inline PixelGrid decode_fits(const std::string& bytes, const std::string& name = "FITS")
{
    auto fail = [&](const std::string& why) { return Error(name + ": " + why); };
    std::optional<long> bitpix, naxis, naxis1, naxis2;
    std::optional<double> pixscale;
    bool simple = false, ended = false;
    std::size_t pos = 0;
    while (!ended) {
        if (pos + fits_block > bytes.size()) throw fail("malformed header (no END card)");
        for (std::size_t k = 0; k < fits_block / fits_card && !ended; ++k, pos += fits_card) {
            const std::string c = bytes.substr(pos, fits_card);
            const std::string key = detail::trim(c.substr(0, 8));
            if (key == "END") {
                ended = true;
                continue;
            }
            if (c.size() < 10 || c.substr(8, 2) != "= ") continue;  // COMMENT, HISTORY, blank
            std::string value = c.substr(10);
            if (const auto slash = value.find('/'); slash != std::string::npos) value = value.substr(0, slash);
            value = detail::trim(value);
            try {
                if (key == "SIMPLE") simple = value == "T";
                else if (key == "BITPIX") bitpix = std::stol(value);
                else if (key == "NAXIS") naxis = std::stol(value);
                else if (key == "NAXIS1") naxis1 = std::stol(value);
                else if (key == "NAXIS2") naxis2 = std::stol(value);
                else if (key == "PIXSCALE") pixscale = std::stod(value);
            } catch (const std::exception&) {
                throw fail("malformed header card '" + detail::trim(c) + "'");
            }
        }
        if (!ended) continue;
        pos = ((pos + fits_block - 1) / fits_block) * fits_block;
    }
    if (!simple) throw fail("malformed header (SIMPLE = T missing)");
    if (!bitpix) throw fail("malformed header (BITPIX missing)");
    if (*bitpix != -64) throw fail("unsupported BITPIX " + std::to_string(*bitpix));
    if (!naxis || *naxis != 2) throw fail("unsupported NAXIS (need 2)");
    if (!naxis1 || !naxis2 || *naxis1 <= 0 || *naxis1 != *naxis2) throw fail("need a square image");
    const auto n = static_cast<std::size_t>(*naxis1);
    if (bytes.size() < pos + n * n * 8) throw fail("truncated data");
    std::vector<double> values(n * n);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t be;
        std::memcpy(&be, bytes.data() + pos + 8 * i, 8);
        values[i] = std::bit_cast<double>(detail::to_big_endian(be));
    }
    return PixelGrid(n, pixscale.value_or(1.0), std::move(values));
}

inline void write_fits(const std::filesystem::path& path, const PixelGrid& g)
{
    write_file_atomic(path, encode_fits(g));
}

inline PixelGrid read_fits(const std::filesystem::path& path)
{
    return decode_fits(read_file(path), path.string());
}

}  // namespace blindsgp::io
