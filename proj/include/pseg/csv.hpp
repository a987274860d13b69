#ifndef PSEG_CSV_HPP
#define PSEG_CSV_HPP

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/types.hpp"

namespace pseg {

namespace detail {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e) throw IoError("cannot parse number '" + s + "' in " + what);
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
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

/// Writes through a sibling temp file and renames it into place, so a
/// failed write never leaves a partial artifact at `path`.
template <typename Fn>
void atomic_write(const std::filesystem::path& path, Fn&& write_body, bool binary = false) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, binary ? std::ios::binary : std::ios::out);
        if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
        write_body(os);
        os.flush();
        if (!os) throw IoError("write failed for '" + path.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
}

}  // namespace detail

/// Feature CSV: header `f0,...,f{d-1}` with an optional trailing `label`
/// column.
inline void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& x,
                              const std::vector<int>* labels = nullptr) {
    if (labels && labels->size() != x.n_samples())
        throw ValidationError("label count differs from sample count");
    detail::atomic_write(path, [&](std::ostream& os) {
        for (std::size_t k = 0; k < x.n_dims(); ++k) os << (k ? "," : "") << 'f' << k;
        if (labels) os << ",label";
        os << '\n';
        for (std::size_t n = 0; n < x.n_samples(); ++n) {
            for (std::size_t k = 0; k < x.n_dims(); ++k)
                os << (k ? "," : "") << detail::format_double(x(n, k));
            if (labels) os << ',' << (*labels)[n];
            os << '\n';
        }
    });
}

struct FeatureCsv {
    FeatureMatrix features;
    std::optional<std::vector<int>> labels;
};

inline FeatureCsv read_feature_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty feature CSV '" + path.string() + "'");
    const auto header = detail::split_csv_line(line);
    std::size_t d = header.size();
    bool has_label = !header.empty() && header.back() == "label";
    if (has_label) --d;
    for (std::size_t k = 0; k < d; ++k)
        if (header[k] != "f" + std::to_string(k))
            throw IoError("feature CSV header column " + std::to_string(k) + " should be f" +
                          std::to_string(k));
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw IoError("feature CSV row " + std::to_string(n + 1) + " has wrong column count");
        for (std::size_t k = 0; k < d; ++k) values.push_back(detail::parse_double(cells[k], path.string()));
        if (has_label) labels.push_back(static_cast<int>(detail::parse_double(cells[d], path.string())));
        ++n;
    }
    if (n == 0) throw IoError("feature CSV '" + path.string() + "' has no rows");
    FeatureCsv out{FeatureMatrix(n, d, std::move(values)), std::nullopt};
    if (has_label) out.labels = std::move(labels);
    return out;
}

}  // namespace pseg

#endif  // PSEG_CSV_HPP
