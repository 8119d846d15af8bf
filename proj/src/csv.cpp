#include "latreg/csv.hpp"

#include "latreg/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace latreg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& cell, std::size_t row, const std::string& col) {
    if (cell.empty()) {
        throw DataError("empty cell in column '" + col + "' at row " + std::to_string(row));
    }
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE) {
        throw DataError("cannot parse '" + cell + "' in column '" + col + "' at row " +
                        std::to_string(row));
    }
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw DataError("missing column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    }
};

CsvTable read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("empty file: " + path);
    }
    table.header = split(line, ',');
    const std::size_t width = table.header.size();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != width) {
            throw DataError("row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(width));
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

} // namespace

ColumnMap ColumnMap::parse(const std::string& spec) {
    ColumnMap map;
    for (const std::string& part : split(spec, ',')) {
        if (part.empty()) continue;
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos) {
            throw DataError("bad schema entry '" + part + "'; expected key=COLUMN");
        }
        const std::string key = trim(part.substr(0, eq));
        const std::string val = trim(part.substr(eq + 1));
        if (val.empty()) {
            throw DataError("empty column name for schema key '" + key + "'");
        }
        if (key == "y") {
            map.y = val;
        } else if (key == "x") {
            map.x = val;
        } else if (key == "sigma") {
            map.sigma = val;
        } else if (key == "weight") {
            map.weight = val;
        } else if (key == "group") {
            map.group = val;
        } else if (key == "z") {
            for (const std::string& col : split(val, '+')) {
                if (col.empty()) {
                    throw DataError("empty covariate column in schema");
                }
                map.z.push_back(col);
            }
        } else {
            throw DataError("unknown schema key '" + key + "'");
        }
    }
    if (map.y.empty() || map.x.empty()) {
        throw DataError("schema must map y and x");
    }
    // Grouped input derives sigma from within-group dispersion.
    if (map.sigma.empty() && map.group.empty()) {
        throw DataError("schema must map sigma (or group, for student-level data)");
    }
    return map;
}

ObservationSet load_observations(const std::string& path, const ColumnMap& schema) {
    const CsvTable table = read_table(path);
    const std::size_t cy = table.column(schema.y);
    const std::size_t cx = table.column(schema.x);
    const std::size_t cs = table.column(schema.sigma);
    const std::size_t n = table.rows.size();
    std::vector<double> y(n), x(n), sigma(n), weight;
    std::optional<Eigen::MatrixXd> z;
    std::vector<std::size_t> zcols;
    for (const auto& name : schema.z) zcols.push_back(table.column(name));
    if (!zcols.empty()) z = Eigen::MatrixXd(n, zcols.size());
    std::size_t cw = 0;
    if (!schema.weight.empty()) {
        cw = table.column(schema.weight);
        weight.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        y[i] = parse_double(row[cy], i + 1, schema.y);
        x[i] = parse_double(row[cx], i + 1, schema.x);
        sigma[i] = parse_double(row[cs], i + 1, schema.sigma);
        if (!(sigma[i] > 0)) {
            throw DataError("sigma must be strictly positive; got " + row[cs] +
                            " at row " + std::to_string(i + 1));
        }
        if (!weight.empty()) {
            weight[i] = parse_double(row[cw], i + 1, schema.weight);
        }
        for (std::size_t k = 0; k < zcols.size(); ++k) {
            (*z)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                parse_double(row[zcols[k]], i + 1, schema.z[k]);
        }
    }
    return ObservationSet::make(std::move(y), std::move(x), std::move(sigma),
                                std::move(weight), std::move(z));
}

GroupedData load_grouped(const std::string& path, const ColumnMap& schema) {
    if (schema.group.empty()) {
        throw DataError("grouped load requires a group= column in the schema");
    }
    const CsvTable table = read_table(path);
    const std::size_t cy = table.column(schema.y);
    const std::size_t cx = table.column(schema.x);
    const std::size_t cg = table.column(schema.group);
    std::vector<std::size_t> zcols;
    for (const auto& name : schema.z) zcols.push_back(table.column(name));

    // Group by id, first-appearance order, within-group row order preserved.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const std::string& id = table.rows[i][cg];
        auto [it, inserted] = members.try_emplace(id);
        if (inserted) order.push_back(id);
        it->second.push_back(i);
    }

    std::vector<Group> groups;
    groups.reserve(order.size());
    for (const std::string& id : order) {
        const auto& idx = members[id];
        Group g;
        g.id = id;
        g.y.reserve(idx.size());
        g.x.reserve(idx.size());
        if (!zcols.empty()) g.z = Eigen::MatrixXd(idx.size(), zcols.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto& row = table.rows[idx[j]];
            g.y.push_back(parse_double(row[cy], idx[j] + 1, schema.y));
            g.x.push_back(parse_double(row[cx], idx[j] + 1, schema.x));
            for (std::size_t k = 0; k < zcols.size(); ++k) {
                (*g.z)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                    parse_double(row[zcols[k]], idx[j] + 1, schema.z[k]);
            }
        }
        groups.push_back(std::move(g));
    }
    return GroupedData::make(std::move(groups));
}

void write_observations(const std::string& path, const ObservationSet& data,
                        const ColumnMap& schema) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    out << schema.y << ',' << schema.x << ',' << schema.sigma;
    if (!schema.weight.empty()) out << ',' << schema.weight;
    for (const auto& zc : schema.z) out << ',' << zc;
    out << '\n';
    char buf[64];
    auto put = [&](double v, bool lead_comma) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        if (lead_comma) out << ',';
        out << buf;
    };
    const std::size_t zc = schema.z.size();
    if (zc > 0 &&
        (!data.has_covariates() || static_cast<std::size_t>(data.covariates().cols()) != zc)) {
        throw DataError("schema covariate count does not match data");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        put(data.y()[i], false);
        put(data.x()[i], true);
        put(data.sigma()[i], true);
        if (!schema.weight.empty()) put(data.weight()[i], true);
        for (std::size_t k = 0; k < zc; ++k) {
            put(data.covariates()(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(k)),
                true);
        }
        out << '\n';
    }
}

} // namespace latreg
