#pragma once

// Flat key = value run configuration. Keys are "section.name"; a line
// "[section]" sets the prefix for the keys that follow. '#' starts a comment.
// Every key has a default, and keys not in the table are rejected.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/io/files.hpp"

namespace blindsgp::io {

struct ConfigKey {
    std::string_view key;
    std::string_view fallback;
    std::string_view doc;
};

// "auto" defers the choice to the mode (single or fizeau).
inline constexpr ConfigKey config_keys[] = {
    {"run.mode", "single", "single | fizeau"},
    {"run.seed", "1", "noise seed; the blind solver records it"},
    {"output.dir", "out", "output directory"},

    {"telescope.diameter", "8.4", "aperture diameter, m"},
    {"telescope.baseline", "auto", "center-to-center distance, m (single: 0, fizeau: 14.4)"},
    {"telescope.wavelength", "2.2e-6", "m"},
    {"telescope.pixel_scale", "auto", "mas / px (single: 15, fizeau: 5)"},
    {"telescope.efficiency", "0.30", "total throughput"},
    {"telescope.collecting_area", "0", "m^2; 0 = geometric area"},
    {"telescope.oversample", "4", "pupil edge antialiasing factor"},

    {"noise.ron_sigma", "10", "read-out noise, e- / px / frame"},
    {"noise.saturation", "5e4", "counts / px / frame"},
    {"noise.background_mag", "13.5", "sky, mag / arcsec^2"},
    {"noise.flux_zero_point", "1.6e9", "photons / s / m^2 at magnitude 0"},
    {"noise.frames", "10", "co-added frames"},

    {"field.size", "128", "N, power of two"},
    {"field.strehl", "0.8", "Strehl ratio of every PSF"},
    {"field.halo_width", "0", "Gaussian halo FWHM, mas; 0 = 4 lambda/D"},
    {"field.stars", "0,0,15", "x_mas,y_mas,mag entries separated by ';'"},
    {"field.angles", "auto", "baseline angles, degrees (single: 0, fizeau: 0,60,120)"},

    {"solver.alpha_init", "1.3", ""},
    {"solver.alpha_min", "1e-5", ""},
    {"solver.alpha_max", "1e5", ""},
    {"solver.tau", "0.5", "initial BB alternation threshold"},
    {"solver.bb2_memory", "3", ""},
    {"solver.beta", "0.4", "backtracking factor"},
    {"solver.gamma", "1e-4", "Armijo constant"},
    {"solver.max_backtracks", "50", ""},
    {"solver.obj_scaling_lower", "1e-6", "object L1 as a multiple of c / N^2"},
    {"solver.obj_scaling_upper", "10", "object L2 as a multiple of c"},
    {"solver.psf_scaling_lower", "1e-12", "PSF L1 (L2 is the cap)"},

    {"blind.outer", "1000", "outer iterations"},
    {"blind.inner_obj", "50", "object SGP iterations per outer iteration"},
    {"blind.inner_psf", "1", "PSF SGP iterations per outer iteration"},
    {"blind.init", "pedestal", "pedestal | autocorrelation"},
    {"blind.freeze_psf", "false", "keep the initial PSFs (non-blind)"},
    {"blind.rel_tol", "0", "stop on relative objective change; 0 = off"},
    {"blind.checkpoint_every", "0", "dump object and PSFs every M outer iterations; 0 = off"},
};

class RunConfig {
public:
    RunConfig()
    {
        for (const auto& k : config_keys) values_[std::string(k.key)] = std::string(k.fallback);
    }

    static RunConfig parse(const std::string& text, const std::string& origin = "config")
    {
        RunConfig cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::string where = origin + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw Error(where + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw Error(where + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
            cfg.set(key, trim(line.substr(eq + 1)), where);
        }
        return cfg;
    }

    static RunConfig load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

    void set(const std::string& key, const std::string& value, const std::string& where = "override")
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error(where + ": unknown key '" + key + "'");
        it->second = value;
    }

    const std::string& str(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error("config: unknown key '" + key + "'");
        return it->second;
    }

    bool is_auto(const std::string& key) const { return str(key) == "auto"; }

    double number(const std::string& key) const
    {
        const std::string& s = str(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error("config: '" + key + "' is not a number: '" + s + "'");
        }
    }

    long integer(const std::string& key) const
    {
        const std::string& s = str(key);
        try {
            std::size_t used = 0;
            const long v = std::stol(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error("config: '" + key + "' is not an integer: '" + s + "'");
        }
    }

    std::uint64_t unsigned_integer(const std::string& key) const
    {
        const std::string& s = str(key);
        try {
            std::size_t used = 0;
            const auto v = std::stoull(s, &used);
            if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error("config: '" + key + "' is not a nonnegative integer: '" + s + "'");
        }
    }

    bool flag(const std::string& key) const
    {
        const std::string& s = str(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw Error("config: '" + key + "' is not a boolean: '" + s + "'");
    }

    std::vector<double> numbers(const std::string& key, char sep = ',') const
    {
        std::vector<double> out;
        std::istringstream in(str(key));
        std::string item;
        while (std::getline(in, item, sep)) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw Error("config: bad number '" + item + "' in '" + key + "'");
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace blindsgp::io
