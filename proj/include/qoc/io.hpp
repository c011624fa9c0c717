#pragma once

#include "qoc/control_field.hpp"
#include "qoc/system_model.hpp"
#include "qoc/types.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace qoc {

// Full-precision formatting; 17 significant digits round-trip a double exactly.
inline std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Field files are CSV with columns k,t,epsilon in SI units (seconds, V/m).
inline void write_field_csv(const std::filesystem::path& path, const FieldGrid& f,
                            const PhysicalConstants& consts)
{
    f.validate();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open field file for writing: " + path.string());
    const double t_scale = 1.0 / consts.time_si_to_internal();
    const double e_scale = 1.0 / consts.field_si_to_internal();
    out << "k,t,epsilon\n";
    for (int k = 1; k <= f.n; ++k)
        out << k << ',' << fmt17(f.time_at(k) * t_scale) << ',' << fmt17(f.values(k - 1) * e_scale)
            << '\n';
}

inline FieldGrid read_field_csv(const std::filesystem::path& path, const PhysicalConstants& consts)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open field file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("k,t,epsilon", 0) != 0)
        throw ConfigError("field file missing 'k,t,epsilon' header: " + path.string());

    std::vector<double> times, values;
    int expected_k = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) throw ConfigError("malformed field row: " + line);
        if (std::stoi(cell) != expected_k) throw ConfigError("field rows must be numbered 1..n");
        if (!std::getline(row, cell, ',')) throw ConfigError("malformed field row: " + line);
        times.push_back(std::stod(cell));
        if (!std::getline(row, cell, ',')) throw ConfigError("malformed field row: " + line);
        values.push_back(std::stod(cell));
        ++expected_k;
    }
    if (times.empty()) throw ConfigError("field file has no samples: " + path.string());

    FieldGrid f;
    f.n = static_cast<int>(times.size());
    f.dt = times.front() * consts.time_si_to_internal(); // t_1 = dt
    f.values.resize(f.n);
    for (int k = 1; k <= f.n; ++k) {
        const double t = times[k - 1] * consts.time_si_to_internal();
        if (std::abs(t - k * f.dt) > 1e-9 * std::max(1.0, std::abs(t)))
            throw ConfigError("field samples must sit on a uniform grid t_k = k dt");
        f.values(k - 1) = values[k - 1] * consts.field_si_to_internal();
    }
    f.validate();
    return f;
}

// Warm-start support: move a field onto another uniform grid with the same total
// time by nearest-step sample-and-hold.
inline FieldGrid resample_nearest(const FieldGrid& f, int n)
{
    f.validate();
    if (n < 1) throw ConfigError("resample_nearest: need n >= 1");
    if (n == f.n) return f;
    FieldGrid out;
    out.n = n;
    out.dt = f.total_time() / n;
    out.values.resize(n);
    for (int k = 1; k <= n; ++k) {
        int src = static_cast<int>(std::lround(out.time_at(k) / f.dt));
        src = std::clamp(src, 1, f.n);
        out.values(k - 1) = f.values(src - 1);
    }
    return out;
}

} // namespace qoc
