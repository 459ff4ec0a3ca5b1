#pragma once

#include "flowmoe/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowmoe {

// One NetFlow-style record. label: 0 = benign, 1 = malicious.
struct FlowRecord {
    std::uint64_t flow_id = 0;
    std::string src_ip;
    std::string dst_ip;
    double timestamp = 0.0;
    std::vector<double> features;
    std::optional<int> label;

    bool operator==(const FlowRecord&) const = default;
};

// Column mapping for a flow CSV with a header row.
struct SchemaConfig {
    std::string src_col = "src_ip";
    std::string dst_col = "dst_ip";
    std::string ts_col = "timestamp";
    std::string label_col = "label";  // empty: no label column
    std::vector<std::string> feature_cols;
    char delimiter = ',';
    // Multiplier applied to the timestamp column (e.g. 1e-3 for milliseconds).
    double ts_scale = 1.0;
    // When false, a missing label column is a schema error.
    bool labels_optional = true;
    // Fraction of data rows allowed to fail before parsing aborts.
    double max_error_fraction = 0.01;

    void validate() const;
};

struct RowError {
    std::uint64_t row = 0;  // 0-based data row index, same numbering as flow_id
    std::string reason;
};

struct ParseResult {
    std::vector<FlowRecord> records;
    std::vector<RowError> errors;
};

/// Parses a delimited flow file. flow_id is the 0-based data row index, so
/// rejected rows leave gaps. Bad rows are collected; if their fraction exceeds
/// schema.max_error_fraction a ParseError is thrown. Missing columns throw
/// SchemaError.
ParseResult parse_flow_csv(const std::filesystem::path& path, const SchemaConfig& schema);
ParseResult parse_flow_csv(std::istream& in, const SchemaConfig& schema);

// Writes records with the schema's column names; numbers use the shortest
// round-trip representation.
void write_flow_csv(std::ostream& out, std::span<const FlowRecord> records, const SchemaConfig& schema);
void write_flow_csv(const std::filesystem::path& path, std::span<const FlowRecord> records,
                    const SchemaConfig& schema);

void write_error_report(const std::filesystem::path& path, std::span<const RowError> errors);

inline constexpr double kStdFloor = 1e-8;

/// z-score statistics. Edge-feature moments come from fit_normalization;
/// the degree moments (of log1p(degree)) are filled by fit_degree_normalization
/// once training graphs exist.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    double deg_mean = 0.0;
    double deg_std = 1.0;

    std::size_t dim() const { return mean.size(); }
    // log1p followed by z-score.
    double normalize_degree(double degree) const;

    bool operator==(const NormStats&) const = default;
};

NormStats fit_normalization(std::span<const FlowRecord> records);

// (x - mean) / std per feature. Not idempotent: applying twice normalizes twice.
std::vector<FlowRecord> apply_normalization(std::span<const FlowRecord> records, const NormStats& stats);
void normalize_rows(nn::Matrix& features, const NormStats& stats);
void denormalize_rows(nn::Matrix& features, const NormStats& stats);
void normalize_in_place(std::span<double> feature_row, const NormStats& stats);

void write_norm_stats(std::ostream& out, const NormStats& stats);
NormStats read_norm_stats(std::istream& in);

/// Half-open windows [k*w, (k+1)*w) by timestamp, emitted in increasing k.
/// Record order inside a window is preserved; empty windows are omitted.
std::vector<std::vector<FlowRecord>> window_flows(std::span<const FlowRecord> records, double window_seconds);

/// Stable split by arrival time: the earliest `train_fraction` of records
/// (by timestamp, ties by input order) go to the first half.
std::pair<std::vector<FlowRecord>, std::vector<FlowRecord>> split_by_time(std::span<const FlowRecord> records,
                                                                         double train_fraction);

}  // namespace flowmoe
