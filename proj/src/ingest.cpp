#include "flowmoe/ingest.hpp"

#include "flowmoe/binary_io.hpp"
#include "flowmoe/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string_view>
#include <unordered_map>

namespace flowmoe {

void SchemaConfig::validate() const {
    if (src_col.empty() || dst_col.empty() || ts_col.empty())
        throw SchemaError("schema must name src_col, dst_col and ts_col");
    if (feature_cols.empty()) throw SchemaError("schema must list at least one feature column");
    if (!(ts_scale > 0.0)) throw SchemaError("ts_scale must be positive");
    if (!(max_error_fraction >= 0.0 && max_error_fraction <= 1.0))
        throw SchemaError("max_error_fraction must lie in [0, 1]");
}

namespace {

// Splits one line on the delimiter. Double-quoted fields may contain the
// delimiter; doubled quotes inside them are unescaped.
void split_fields(std::string_view line, char delim, std::vector<std::string>& out) {
    out.clear();
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

ParseResult parse_flow_csv(std::istream& in, const SchemaConfig& schema) {
    schema.validate();
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("flow file is empty (no header row)");

    std::vector<std::string> header;
    split_fields(line, schema.delimiter, header);
    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index.emplace(std::string(trim(header[i])), i);

    auto require = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw SchemaError("missing column '" + name + "'");
        return it->second;
    };
    const std::size_t src = require(schema.src_col);
    const std::size_t dst = require(schema.dst_col);
    const std::size_t ts = require(schema.ts_col);
    std::optional<std::size_t> label_idx;
    if (!schema.label_col.empty()) {
        auto it = col_index.find(schema.label_col);
        if (it != col_index.end()) label_idx = it->second;
        else if (!schema.labels_optional) throw SchemaError("missing column '" + schema.label_col + "'");
    }
    std::vector<std::size_t> feat_idx;
    feat_idx.reserve(schema.feature_cols.size());
    for (const auto& f : schema.feature_cols) feat_idx.push_back(require(f));

    ParseResult result;
    std::vector<std::string> fields;
    std::uint64_t row = 0;
    for (; std::getline(in, line); ++row) {
        if (trim(line).empty()) {
            --row;
            continue;
        }
        split_fields(line, schema.delimiter, fields);
        if (fields.size() != header.size()) {
            result.errors.push_back({row, "expected " + std::to_string(header.size()) + " fields, found " +
                                              std::to_string(fields.size())});
            continue;
        }
        FlowRecord rec;
        rec.flow_id = row;
        rec.src_ip = std::string(trim(fields[src]));
        rec.dst_ip = std::string(trim(fields[dst]));
        if (rec.src_ip.empty() || rec.dst_ip.empty()) {
            result.errors.push_back({row, "empty endpoint address"});
            continue;
        }
        if (!parse_double(fields[ts], rec.timestamp) || !std::isfinite(rec.timestamp)) {
            result.errors.push_back({row, "bad timestamp '" + fields[ts] + "'"});
            continue;
        }
        rec.timestamp *= schema.ts_scale;
        rec.features.resize(feat_idx.size());
        bool ok = true;
        for (std::size_t k = 0; k < feat_idx.size(); ++k) {
            const auto& cell = fields[feat_idx[k]];
            if (!parse_double(cell, rec.features[k]) || !std::isfinite(rec.features[k])) {
                result.errors.push_back({row, "bad value '" + cell + "' in column '" + schema.feature_cols[k] + "'"});
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        if (label_idx) {
            const auto cell = trim(fields[*label_idx]);
            if (cell == "0") rec.label = 0;
            else if (cell == "1") rec.label = 1;
            else if (!cell.empty()) {
                result.errors.push_back({row, "bad label '" + std::string(cell) + "'"});
                continue;
            }
        }
        result.records.push_back(std::move(rec));
    }

    if (row > 0) {
        const double frac = static_cast<double>(result.errors.size()) / static_cast<double>(row);
        if (frac > schema.max_error_fraction)
            throw ParseError(std::to_string(result.errors.size()) + " of " + std::to_string(row) +
                             " rows failed to parse (first: row " + std::to_string(result.errors.front().row) +
                             ": " + result.errors.front().reason + ")");
    }
    return result;
}

ParseResult parse_flow_csv(const std::filesystem::path& path, const SchemaConfig& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open flow file " + path.string());
    return parse_flow_csv(in, schema);
}

void write_flow_csv(std::ostream& out, std::span<const FlowRecord> records, const SchemaConfig& schema) {
    const char d = schema.delimiter;
    out << schema.src_col << d << schema.dst_col << d << schema.ts_col;
    for (const auto& f : schema.feature_cols) out << d << f;
    const bool labels = !schema.label_col.empty();
    if (labels) out << d << schema.label_col;
    out << '\n';
    for (const auto& r : records) {
        if (r.features.size() != schema.feature_cols.size())
            throw DimensionError("record feature count does not match the schema");
        out << r.src_ip << d << r.dst_ip << d << format_double(r.timestamp / schema.ts_scale);
        for (double v : r.features) out << d << format_double(v);
        if (labels) {
            out << d;
            if (r.label) out << *r.label;
        }
        out << '\n';
    }
}

void write_flow_csv(const std::filesystem::path& path, std::span<const FlowRecord> records,
                    const SchemaConfig& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_flow_csv(out, records, schema);
    if (!out) throw IoError("write failed for " + path.string());
}

void write_error_report(const std::filesystem::path& path, std::span<const RowError> errors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "row,reason\n";
    for (const auto& e : errors) {
        std::string reason = e.reason;
        std::replace(reason.begin(), reason.end(), '"', '\'');
        out << e.row << ",\"" << reason << "\"\n";
    }
}

double NormStats::normalize_degree(double degree) const { return (std::log1p(degree) - deg_mean) / deg_std; }

NormStats fit_normalization(std::span<const FlowRecord> records) {
    if (records.empty()) throw DimensionError("cannot fit normalization on an empty record set");
    const std::size_t d = records.front().features.size();
    // Welford running moments.
    std::vector<double> mean(d, 0.0), m2(d, 0.0);
    double n = 0.0;
    for (const auto& r : records) {
        if (r.features.size() != d) throw DimensionError("records disagree on feature count");
        n += 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double delta = r.features[k] - mean[k];
            mean[k] += delta / n;
            m2[k] += delta * (r.features[k] - mean[k]);
        }
    }
    NormStats s;
    s.mean = mean;
    s.std.resize(d);
    for (std::size_t k = 0; k < d; ++k) s.std[k] = std::max(std::sqrt(m2[k] / n), kStdFloor);
    return s;
}

void normalize_in_place(std::span<double> row, const NormStats& stats) {
    if (row.size() != stats.dim()) throw DimensionError("feature row does not match normalization stats");
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = (row[k] - stats.mean[k]) / stats.std[k];
}

std::vector<FlowRecord> apply_normalization(std::span<const FlowRecord> records, const NormStats& stats) {
    std::vector<FlowRecord> out(records.begin(), records.end());
    for (auto& r : out) normalize_in_place(r.features, stats);
    return out;
}

void normalize_rows(nn::Matrix& features, const NormStats& stats) {
    if (static_cast<std::size_t>(features.cols()) != stats.dim())
        throw DimensionError("feature matrix does not match normalization stats");
    for (Eigen::Index r = 0; r < features.rows(); ++r)
        for (Eigen::Index k = 0; k < features.cols(); ++k)
            features(r, k) = (features(r, k) - stats.mean[static_cast<std::size_t>(k)]) /
                             stats.std[static_cast<std::size_t>(k)];
}

void denormalize_rows(nn::Matrix& features, const NormStats& stats) {
    if (static_cast<std::size_t>(features.cols()) != stats.dim())
        throw DimensionError("feature matrix does not match normalization stats");
    for (Eigen::Index r = 0; r < features.rows(); ++r)
        for (Eigen::Index k = 0; k < features.cols(); ++k)
            features(r, k) = features(r, k) * stats.std[static_cast<std::size_t>(k)] +
                             stats.mean[static_cast<std::size_t>(k)];
}

void write_norm_stats(std::ostream& out, const NormStats& stats) {
    binary::put_u32(out, static_cast<std::uint32_t>(stats.dim()));
    for (double v : stats.mean) binary::put_f64(out, v);
    for (double v : stats.std) binary::put_f64(out, v);
    binary::put_f64(out, stats.deg_mean);
    binary::put_f64(out, stats.deg_std);
}

NormStats read_norm_stats(std::istream& in) {
    const auto d = binary::get_u32(in);
    if (d == 0 || d > 4096) throw FormatError("implausible feature dimension in normalization stats");
    NormStats s;
    s.mean.resize(d);
    s.std.resize(d);
    for (auto& v : s.mean) v = binary::get_f64(in);
    for (auto& v : s.std) v = binary::get_f64(in);
    s.deg_mean = binary::get_f64(in);
    s.deg_std = binary::get_f64(in);
    return s;
}

std::vector<std::vector<FlowRecord>> window_flows(std::span<const FlowRecord> records, double window_seconds) {
    if (!(window_seconds > 0.0)) throw ConfigError("window_seconds must be positive");
    std::map<long long, std::vector<FlowRecord>> buckets;
    for (const auto& r : records) {
        const auto k = static_cast<long long>(std::floor(r.timestamp / window_seconds));
        buckets[k].push_back(r);
    }
    std::vector<std::vector<FlowRecord>> out;
    out.reserve(buckets.size());
    for (auto& [k, group] : buckets) out.push_back(std::move(group));
    return out;
}

std::pair<std::vector<FlowRecord>, std::vector<FlowRecord>> split_by_time(std::span<const FlowRecord> records,
                                                                         double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
    const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(records.size())));
    std::pair<std::vector<FlowRecord>, std::vector<FlowRecord>> out;
    for (std::size_t i = 0; i < order.size(); ++i) (i < cut ? out.first : out.second).push_back(records[order[i]]);
    return out;
}

}  // namespace flowmoe
