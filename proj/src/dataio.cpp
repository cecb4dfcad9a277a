#include "cwb/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cwb {

using json = nlohmann::json;

const Column* Dataset::find(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

const Column& Dataset::col(const std::string& name) const {
    const Column* c = find(name);
    if (!c) throw InputError("unknown column: " + name);
    return *c;
}

Column& Dataset::col(const std::string& name) {
    for (auto& c : columns) {
        if (c.name == name) return c;
    }
    throw InputError("unknown column: " + name);
}

Vector Dataset::response_vector() const {
    const Column& c = col(response);
    if (c.type != ColumnType::numeric) {
        throw InputError("response column " + response + " must be numeric");
    }
    Vector y(static_cast<Eigen::Index>(c.num.size()));
    for (std::size_t i = 0; i < c.num.size(); ++i) {
        if (c.missing[i]) {
            throw InputError("missing response value at row " + std::to_string(i));
        }
        y[static_cast<Eigen::Index>(i)] = c.num[i];
    }
    return y;
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.response = response;
    out.site_column = site_column;
    out.columns.reserve(columns.size());
    for (const auto& c : columns) {
        Column nc;
        nc.name = c.name;
        nc.type = c.type;
        nc.missing.reserve(rows.size());
        if (c.type == ColumnType::numeric) {
            nc.num.reserve(rows.size());
            for (std::size_t r : rows) {
                nc.num.push_back(c.num[r]);
                nc.missing.push_back(c.missing[r]);
            }
        } else {
            nc.cat.reserve(rows.size());
            for (std::size_t r : rows) {
                nc.cat.push_back(c.cat[r]);
                nc.missing.push_back(c.missing[r]);
            }
        }
        out.columns.push_back(std::move(nc));
    }
    return out;
}

void Dataset::drop_column(const std::string& name) {
    for (auto it = columns.begin(); it != columns.end(); ++it) {
        if (it->name == name) {
            columns.erase(it);
            if (site_column == name) site_column.clear();
            if (response == name) response.clear();
            return;
        }
    }
    throw InputError("unknown column: " + name);
}

Dataset Dataset::concat(const std::vector<Dataset>& parts) {
    if (parts.empty()) throw InputError("concat: no datasets");
    Dataset out = parts.front();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const Dataset& d = parts[p];
        if (d.columns.size() != out.columns.size()) {
            throw InputError("concat: column count mismatch");
        }
        for (std::size_t c = 0; c < out.columns.size(); ++c) {
            if (d.columns[c].name != out.columns[c].name ||
                d.columns[c].type != out.columns[c].type) {
                throw InputError("concat: schema mismatch at column " + out.columns[c].name);
            }
            Column& oc = out.columns[c];
            const Column& ic = d.columns[c];
            oc.num.insert(oc.num.end(), ic.num.begin(), ic.num.end());
            oc.cat.insert(oc.cat.end(), ic.cat.begin(), ic.cat.end());
            oc.missing.insert(oc.missing.end(), ic.missing.begin(), ic.missing.end());
        }
    }
    return out;
}

// ---------------------------------------------------------------- CSV I/O

namespace {

std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"' && cur.empty()) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    if (quoted) {
        throw InputError("unterminated quote on line " + std::to_string(line_no));
    }
    fields.push_back(cur);
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end;
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError(path + ": empty file");
    std::vector<std::string> header = parse_csv_line(line, 1);

    Dataset ds;
    ds.response = schema.response;
    ds.site_column = schema.site_column;
    std::vector<ColumnType> types(header.size(), ColumnType::numeric);
    if (!schema.columns.empty()) {
        if (schema.columns.size() != header.size()) {
            throw InputError(path + ": header has " + std::to_string(header.size()) +
                             " columns, schema expects " + std::to_string(schema.columns.size()));
        }
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (schema.columns[c].name != header[c]) {
                throw InputError(path + ": column " + std::to_string(c) + " is '" + header[c] +
                                 "', schema expects '" + schema.columns[c].name + "'");
            }
            types[c] = schema.columns[c].type;
        }
    }

    std::vector<std::vector<std::string>> raw;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = parse_csv_line(line, line_no);
        if (fields.size() != header.size()) {
            throw InputError(path + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        raw.push_back(std::move(fields));
    }

    // Header-driven mode: a column is numeric when every non-missing cell parses.
    if (schema.columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            bool numeric = true;
            for (const auto& row : raw) {
                const std::string& cell = row[c];
                if (cell.empty() || cell == "?") continue;
                double v;
                if (!parse_double(cell, v)) {
                    numeric = false;
                    break;
                }
            }
            types[c] = numeric ? ColumnType::numeric : ColumnType::categorical;
            if (header[c] == schema.site_column) types[c] = ColumnType::categorical;
        }
    }

    for (std::size_t c = 0; c < header.size(); ++c) {
        Column col;
        col.name = header[c];
        col.type = types[c];
        col.missing.reserve(raw.size());
        for (std::size_t r = 0; r < raw.size(); ++r) {
            const std::string& cell = raw[r][c];
            const bool miss = cell.empty() || cell == "?";
            col.missing.push_back(miss ? 1 : 0);
            if (col.type == ColumnType::numeric) {
                double v = 0.0;
                if (!miss && !parse_double(cell, v)) {
                    throw InputError(path + ": cannot parse '" + cell + "' as number, row " +
                                     std::to_string(r + 2) + " column " + col.name);
                }
                col.num.push_back(v);
            } else {
                col.cat.push_back(miss ? std::string() : cell);
            }
        }
        ds.columns.push_back(std::move(col));
    }
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    for (std::size_t c = 0; c < ds.columns.size(); ++c) {
        out << (c ? "," : "") << ds.columns[c].name;
    }
    out << "\n";
    const std::size_t n = ds.n_rows();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < ds.columns.size(); ++c) {
            if (c) out << ",";
            const Column& col = ds.columns[c];
            if (col.missing[r]) {
                out << "?";
            } else if (col.type == ColumnType::numeric) {
                out << format_double(col.num[r]);
            } else {
                out << col.cat[r];
            }
        }
        out << "\n";
    }
}

// --------------------------------------------------------------- cleaning

HeartSchema load_heart_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    json j = json::parse(in, nullptr, true);
    HeartSchema s;
    s.retained_numeric = j.at("retained_numeric").get<std::vector<std::string>>();
    s.retained_categorical = j.at("retained_categorical").get<std::vector<std::string>>();
    s.raw_response = j.at("raw_response").get<std::string>();
    s.derived_response = j.at("derived_response").get<std::string>();
    return s;
}

Dataset clean_heart(const Dataset& raw, const HeartSchema& schema) {
    const Column* resp = raw.find(schema.raw_response);
    if (!resp || resp->type != ColumnType::numeric) {
        throw InputError("clean_heart: expected numeric raw response column '" +
                         schema.raw_response + "'");
    }
    std::vector<const Column*> retained;
    for (const auto& name : schema.retained_numeric) {
        const Column* c = raw.find(name);
        if (!c) throw InputError("clean_heart: missing covariate column '" + name + "'");
        retained.push_back(c);
    }
    for (const auto& name : schema.retained_categorical) {
        const Column* c = raw.find(name);
        if (!c) throw InputError("clean_heart: missing covariate column '" + name + "'");
        retained.push_back(c);
    }

    // Complete-case filter over the retained covariates and the response.
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < raw.n_rows(); ++r) {
        if (resp->missing[r]) continue;
        bool ok = true;
        for (const Column* c : retained) {
            if (c->missing[r]) {
                ok = false;
                break;
            }
        }
        if (ok) keep.push_back(r);
    }

    Dataset out;
    out.response = schema.derived_response;
    out.site_column = raw.site_column;

    Column disease;
    disease.name = schema.derived_response;
    disease.type = ColumnType::numeric;
    for (std::size_t r : keep) {
        disease.num.push_back(resp->num[r] > 0.0 ? 1.0 : 0.0);
        disease.missing.push_back(0);
    }
    out.columns.push_back(std::move(disease));

    auto copy_column = [&](const Column& src, ColumnType as_type) {
        Column c;
        c.name = src.name;
        c.type = as_type;
        for (std::size_t r : keep) {
            c.missing.push_back(0);
            if (as_type == ColumnType::numeric) {
                if (src.type != ColumnType::numeric) {
                    throw InputError("clean_heart: column " + src.name + " is not numeric");
                }
                c.num.push_back(src.num[r]);
            } else {
                // Numeric-coded categoricals (sex, cp, exang) become labels.
                c.cat.push_back(src.type == ColumnType::categorical
                                    ? src.cat[r]
                                    : format_double(src.num[r]));
            }
        }
        out.columns.push_back(std::move(c));
    };
    for (const auto& name : schema.retained_numeric) copy_column(raw.col(name), ColumnType::numeric);
    for (const auto& name : schema.retained_categorical) copy_column(raw.col(name), ColumnType::categorical);

    if (!raw.site_column.empty()) {
        const Column& sc = raw.col(raw.site_column);
        Column c;
        c.name = sc.name;
        c.type = ColumnType::categorical;
        for (std::size_t r : keep) {
            c.cat.push_back(sc.cat[r]);
            c.missing.push_back(0);
        }
        out.columns.push_back(std::move(c));
    }
    return out;
}

// ------------------------------------------------------- split / partition

double SplitMix64::normal() {
    // Box-Muller; fixed algorithm so fixtures reproduce across platforms.
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

void shuffle_indices(std::vector<std::size_t>& idx, SplitMix64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

namespace {

std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace

SplitResult split_validation(const Dataset& ds, double fraction, std::uint64_t seed,
                             bool stratify) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw InputError("validation fraction must be in (0,1)");
    }
    const std::size_t n = ds.n_rows();
    SplitMix64 rng(seed);

    std::vector<std::size_t> val_rows;
    bool stratified = false;
    if (stratify) {
        const Vector y = ds.response_vector();
        std::vector<std::size_t> zeros, ones;
        bool binary = true;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] == 0.0) {
                zeros.push_back(static_cast<std::size_t>(i));
            } else if (y[i] == 1.0) {
                ones.push_back(static_cast<std::size_t>(i));
            } else {
                binary = false;
                break;
            }
        }
        if (binary && !zeros.empty() && !ones.empty()) {
            stratified = true;
            for (auto* stratum : {&zeros, &ones}) {
                shuffle_indices(*stratum, rng);
                const std::size_t k = round_half_up(fraction * static_cast<double>(stratum->size()));
                val_rows.insert(val_rows.end(), stratum->begin(),
                                stratum->begin() + static_cast<std::ptrdiff_t>(k));
            }
        }
    }
    if (!stratified) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        shuffle_indices(idx, rng);
        const std::size_t k = round_half_up(fraction * static_cast<double>(n));
        val_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    }

    std::vector<std::uint8_t> is_val(n, 0);
    for (std::size_t r : val_rows) is_val[r] = 1;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_sorted;
    for (std::size_t r = 0; r < n; ++r) {
        (is_val[r] ? val_sorted : train_rows).push_back(r);
    }

    SplitResult out;
    out.train = ds.select_rows(train_rows);
    out.validation = ds.select_rows(val_sorted);
    out.stratified = stratified;
    return out;
}

std::vector<Dataset> partition_horizontal(const Dataset& ds, int n_sites,
                                          PartitionScheme scheme, std::uint64_t seed) {
    const std::size_t n = ds.n_rows();
    if (scheme == PartitionScheme::by_site_tag) {
        if (ds.site_column.empty()) {
            throw InputError("by-site-tag partitioning requires a site column");
        }
        const Column& tags = ds.col(ds.site_column);
        std::set<std::string> distinct(tags.cat.begin(), tags.cat.end());
        std::vector<Dataset> parts;
        for (const auto& tag : distinct) {
            std::vector<std::size_t> rows;
            for (std::size_t r = 0; r < n; ++r) {
                if (tags.cat[r] == tag) rows.push_back(r);
            }
            if (rows.empty()) throw InputError("empty partition for site tag " + tag);
            parts.push_back(ds.select_rows(rows));
        }
        return parts;
    }

    if (n_sites < 1 || static_cast<std::size_t>(n_sites) > n) {
        throw InputError("cannot split " + std::to_string(n) + " rows into " +
                         std::to_string(n_sites) + " non-empty partitions");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (scheme == PartitionScheme::random) {
        SplitMix64 rng(seed);
        shuffle_indices(idx, rng);
    }
    std::vector<Dataset> parts;
    const std::size_t base = n / static_cast<std::size_t>(n_sites);
    const std::size_t extra = n % static_cast<std::size_t>(n_sites);
    std::size_t pos = 0;
    for (int s = 0; s < n_sites; ++s) {
        const std::size_t len = base + (static_cast<std::size_t>(s) < extra ? 1 : 0);
        std::vector<std::size_t> rows(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                      idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
        if (scheme == PartitionScheme::random) std::sort(rows.begin(), rows.end());
        if (rows.empty()) throw InputError("empty partition");
        parts.push_back(ds.select_rows(rows));
        pos += len;
    }
    return parts;
}

Dataset pool_partitions(const std::vector<Dataset>& parts) {
    if (parts.empty()) throw InputError("pool_partitions: no partitions");
    std::vector<Dataset> tagged;
    tagged.reserve(parts.size());
    for (std::size_t s = 0; s < parts.size(); ++s) {
        Dataset d = parts[s];
        const std::string label = std::to_string(s + 1);
        if (d.site_column.empty()) {
            if (d.has_column("site")) {
                throw InputError("pool_partitions: a column named 'site' exists but is not "
                                 "declared as the site column");
            }
            Column c;
            c.name = "site";
            c.type = ColumnType::categorical;
            c.cat.assign(d.n_rows(), label);
            c.missing.assign(d.n_rows(), 0);
            d.columns.push_back(std::move(c));
            d.site_column = "site";
        } else {
            Column& c = d.col(d.site_column);
            std::fill(c.cat.begin(), c.cat.end(), label);
        }
        tagged.push_back(std::move(d));
    }
    return Dataset::concat(tagged);
}

}  // namespace cwb
