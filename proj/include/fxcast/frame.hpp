#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fxcast/errors.hpp"

namespace fxcast {

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// calendar dates
// ---------------------------------------------------------------------------

/// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
inline long civil_to_days(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

/// Parse "YYYY-MM-DD"; returns days since epoch or throws DataError.
inline long parse_iso_date(const std::string& s) {
    int y = 0, m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream is(s);
    is >> y >> dash1 >> m >> dash2 >> d;
    if (is.fail() || dash1 != '-' || dash2 != '-' || m < 1 || m > 12 || d < 1 || d > 31 ||
        s.size() != 10) {
        throw DataError("invalid ISO-8601 date: '" + s + "'");
    }
    return civil_to_days(y, m, d);
}

// ---------------------------------------------------------------------------
// schema
// ---------------------------------------------------------------------------

enum class Frequency { daily, monthly };
enum class ColumnRole { feature, target };

inline std::string to_string(Frequency f) { return f == Frequency::daily ? "daily" : "monthly"; }

struct SchemaColumn {
    std::string name;
    Frequency frequency = Frequency::daily;
    ColumnRole role = ColumnRole::feature;
};

/// Declared column set for CSV ingestion: list of {name, frequency, role}.
struct Schema {
    std::vector<SchemaColumn> columns;

    const SchemaColumn* find(const std::string& name) const {
        for (const auto& c : columns)
            if (c.name == name) return &c;
        return nullptr;
    }

    std::string target_name() const {
        for (const auto& c : columns)
            if (c.role == ColumnRole::target) return c.name;
        throw SchemaError("schema declares no target column");
    }

    static Schema from_json(const nlohmann::json& j) {
        if (!j.is_array()) throw SchemaError("schema JSON must be a list of column objects");
        Schema s;
        for (const auto& e : j) {
            SchemaColumn c;
            c.name = e.at("name").get<std::string>();
            const std::string f = e.at("frequency").get<std::string>();
            if (f == "daily") {
                c.frequency = Frequency::daily;
            } else if (f == "monthly") {
                c.frequency = Frequency::monthly;
            } else {
                throw SchemaError("unknown frequency '" + f + "' for column '" + c.name + "'");
            }
            const std::string r = e.at("role").get<std::string>();
            if (r == "feature") {
                c.role = ColumnRole::feature;
            } else if (r == "target") {
                c.role = ColumnRole::target;
            } else {
                throw SchemaError("unknown role '" + r + "' for column '" + c.name + "'");
            }
            s.columns.push_back(std::move(c));
        }
        return s;
    }

    static Schema from_json_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open schema file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("malformed schema JSON in " + path + ": " + e.what());
        }
        return from_json(j);
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : columns) {
            arr.push_back({{"name", c.name},
                           {"frequency", to_string(c.frequency)},
                           {"role", c.role == ColumnRole::target ? "target" : "feature"}});
        }
        return arr;
    }
};

/// The shipped reference schema: exchange-rate target plus the macro, market,
/// trade, capital-account, money-supply and currency-pair indicators used by
/// the benchmark datasets. Low-frequency statistics are declared monthly.
inline Schema reference_schema() {
    Schema s;
    auto add = [&s](const char* name, Frequency f,
                    ColumnRole r = ColumnRole::feature) {
        s.columns.push_back({name, f, r});
    };
    add("rate", Frequency::daily, ColumnRole::target);
    add("rusa", Frequency::daily);
    add("rchn", Frequency::daily);
    add("dr", Frequency::daily);
    add("ydr", Frequency::daily);
    add("udr", Frequency::daily);
    add("cpiu", Frequency::monthly);
    add("cpic", Frequency::monthly);
    add("ccp", Frequency::monthly);
    add("dowjones", Frequency::daily);
    add("MSCIAAshare", Frequency::daily);
    add("HS300", Frequency::daily);
    add("sprd30.ci", Frequency::daily);
    add("nyseche", Frequency::daily);
    add("hscei.hi", Frequency::daily);
    add("trade", Frequency::monthly);
    add("output", Frequency::monthly);
    add("inputu", Frequency::monthly);
    add("fdix", Frequency::monthly);
    add("fdi", Frequency::monthly);
    add("PI", Frequency::monthly);
    add("OI", Frequency::monthly);
    add("cf", Frequency::monthly);
    add("cm2", Frequency::monthly);
    add("dm2", Frequency::monthly);
    add("um2", Frequency::monthly);
    add("USDJPY", Frequency::daily);
    add("GBPUSD", Frequency::daily);
    add("EURCHN", Frequency::daily);
    add("EURUSD", Frequency::daily);
    add("AUDUSD", Frequency::daily);
    add("USDCAD", Frequency::daily);
    add("USDCHF", Frequency::daily);
    add("USDX", Frequency::daily);
    return s;
}

// ---------------------------------------------------------------------------
// series frame
// ---------------------------------------------------------------------------

struct Column {
    std::string name;
    std::vector<double> values; // NaN = missing
    Frequency frequency = Frequency::daily;
};

/// Timestamp-aligned named columns of raw indicator values. Timestamps are
/// strictly increasing calendar dates; every column has one value slot per
/// timestamp. Immutable by convention after construction.
class SeriesFrame {
public:
    SeriesFrame() = default;

    SeriesFrame(std::vector<std::string> timestamps, std::vector<Column> columns,
                std::string target_name)
        : timestamps_(std::move(timestamps)),
          columns_(std::move(columns)),
          target_name_(std::move(target_name)) {
        epoch_days_.reserve(timestamps_.size());
        for (const auto& t : timestamps_) epoch_days_.push_back(parse_iso_date(t));
        validate();
    }

    std::size_t rows() const { return timestamps_.size(); }
    std::size_t cols() const { return columns_.size(); }
    const std::vector<std::string>& timestamps() const { return timestamps_; }
    const std::vector<long>& epoch_days() const { return epoch_days_; }
    const std::vector<Column>& columns() const { return columns_; }
    const std::string& target_name() const { return target_name_; }

    const Column& column(const std::string& name) const {
        for (const auto& c : columns_)
            if (c.name == name) return c;
        throw SchemaError("no column named '" + name + "' in frame");
    }

    bool has_column(const std::string& name) const {
        for (const auto& c : columns_)
            if (c.name == name) return true;
        return false;
    }

    const Column& target() const { return column(target_name_); }

    std::vector<std::string> feature_names() const {
        std::vector<std::string> out;
        for (const auto& c : columns_)
            if (c.name != target_name_) out.push_back(c.name);
        return out;
    }

    /// Copy with an extra column appended.
    SeriesFrame with_column(Column c) const {
        if (has_column(c.name)) throw SchemaError("column '" + c.name + "' already exists");
        if (c.values.size() != rows()) {
            throw DataError("column '" + c.name + "' length does not match frame rows");
        }
        SeriesFrame out = *this;
        out.columns_.push_back(std::move(c));
        return out;
    }

    /// Copy restricted to rows with from <= date <= to (ISO strings, empty = open end).
    SeriesFrame filtered(const std::string& from, const std::string& to) const {
        const long lo = from.empty() ? std::numeric_limits<long>::min() : parse_iso_date(from);
        const long hi = to.empty() ? std::numeric_limits<long>::max() : parse_iso_date(to);
        SeriesFrame out;
        out.target_name_ = target_name_;
        for (const auto& c : columns_) out.columns_.push_back({c.name, {}, c.frequency});
        for (std::size_t i = 0; i < rows(); ++i) {
            if (epoch_days_[i] < lo || epoch_days_[i] > hi) continue;
            out.timestamps_.push_back(timestamps_[i]);
            out.epoch_days_.push_back(epoch_days_[i]);
            for (std::size_t j = 0; j < columns_.size(); ++j) {
                out.columns_[j].values.push_back(columns_[j].values[i]);
            }
        }
        return out;
    }

    void validate() const {
        for (std::size_t i = 1; i < epoch_days_.size(); ++i) {
            if (epoch_days_[i] == epoch_days_[i - 1]) {
                throw DataError("duplicate date '" + timestamps_[i] + "'");
            }
            if (epoch_days_[i] < epoch_days_[i - 1]) {
                throw DataError("non-monotone dates: '" + timestamps_[i] + "' follows '" +
                                timestamps_[i - 1] + "'");
            }
        }
        std::vector<std::string> seen;
        for (const auto& c : columns_) {
            if (c.values.size() != timestamps_.size()) {
                throw DataError("column '" + c.name + "' has " +
                                std::to_string(c.values.size()) + " values for " +
                                std::to_string(timestamps_.size()) + " timestamps");
            }
            if (std::find(seen.begin(), seen.end(), c.name) != seen.end()) {
                throw SchemaError("duplicate column name '" + c.name + "'");
            }
            seen.push_back(c.name);
        }
        if (!target_name_.empty() && !has_column(target_name_)) {
            throw SchemaError("target column '" + target_name_ + "' not present");
        }
    }

private:
    std::vector<std::string> timestamps_;
    std::vector<long> epoch_days_;
    std::vector<Column> columns_;
    std::string target_name_;
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

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

} // namespace detail

/// Load a CSV whose first column is an ISO-8601 "date" header and whose
/// remaining headers are declared in the schema. Empty cells are missing
/// values; only monthly columns may be sparse. Dates must be strictly
/// increasing in file order.
inline SeriesFrame load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw DataError("empty CSV file: " + path);
    const auto names = detail::split_csv_line(header);
    if (names.empty() || names[0] != "date") {
        throw DataError("first CSV column must be 'date', got '" +
                        (names.empty() ? std::string() : names[0]) + "'");
    }

    std::vector<Column> columns;
    for (std::size_t i = 1; i < names.size(); ++i) {
        const SchemaColumn* sc = schema.find(names[i]);
        if (!sc) throw SchemaError("unknown column '" + names[i] + "' not in schema");
        columns.push_back({sc->name, {}, sc->frequency});
    }

    std::vector<std::string> timestamps;
    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != names.size()) {
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(names.size()) + " cells, got " +
                            std::to_string(cells.size()));
        }
        timestamps.push_back(cells[0]);
        for (std::size_t i = 1; i < cells.size(); ++i) {
            const std::string& cell = cells[i];
            Column& col = columns[i - 1];
            if (cell.empty()) {
                if (col.frequency == Frequency::daily) {
                    throw DataError("row " + std::to_string(row) + ": missing value in daily column '" +
                                    col.name + "'");
                }
                col.values.push_back(missing_value());
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') {
                throw DataError("row " + std::to_string(row) + ": cannot parse '" + cell +
                                "' in column '" + col.name + "'");
            }
            col.values.push_back(v);
        }
    }

    std::string target;
    for (const auto& sc : schema.columns) {
        if (sc.role == ColumnRole::target) {
            for (const auto& c : columns) {
                if (c.name == sc.name) target = sc.name;
            }
        }
    }
    if (target.empty()) throw SchemaError("target column from schema not present in CSV");
    return SeriesFrame(std::move(timestamps), std::move(columns), std::move(target));
}

/// Write a frame back to CSV (missing cells become empty). Values are printed
/// with round-trip precision so rewrites are byte-stable.
inline void write_csv(const SeriesFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write data file: " + path);
    out << "date";
    for (const auto& c : frame.columns()) out << ',' << c.name;
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < frame.rows(); ++i) {
        out << frame.timestamps()[i];
        for (const auto& c : frame.columns()) {
            out << ',';
            const double v = c.values[i];
            if (!is_missing(v)) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out << buf;
            }
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// forward fill and derived columns
// ---------------------------------------------------------------------------

/// Fill missing daily cells of monthly columns with the most recent prior
/// report. Daily columns are untouched. Idempotent.
inline SeriesFrame forward_fill(const SeriesFrame& frame) {
    std::vector<Column> cols = frame.columns();
    for (auto& c : cols) {
        if (c.frequency != Frequency::monthly) continue;
        if (!c.values.empty() && is_missing(c.values[0])) {
            throw DataError("column '" + c.name +
                            "' has no report at or before the first timestamp");
        }
        double last = c.values.empty() ? 0.0 : c.values[0];
        for (auto& v : c.values) {
            if (is_missing(v)) {
                v = last;
            } else {
                last = v;
            }
        }
    }
    return SeriesFrame(frame.timestamps(), std::move(cols), frame.target_name());
}

/// Append the "date" feature: days since the first timestamp, daily frequency.
/// No-op when the column already exists.
inline SeriesFrame with_date_column(const SeriesFrame& frame) {
    if (frame.has_column("date")) return frame;
    Column c{"date", {}, Frequency::daily};
    c.values.reserve(frame.rows());
    const long base = frame.rows() ? frame.epoch_days()[0] : 0;
    for (long d : frame.epoch_days()) c.values.push_back(static_cast<double>(d - base));
    return frame.with_column(std::move(c));
}

// ---------------------------------------------------------------------------
// z-score normalization
// ---------------------------------------------------------------------------

/// Per-column mean/std fit on a training prefix (population std, floored at
/// 1e-12 so constant columns normalize to zero).
struct NormStats {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> stdev;

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return std::nullopt;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t i = 0; i < names.size(); ++i) {
            arr.push_back({{"name", names[i]}, {"mean", mean[i]}, {"std", stdev[i]}});
        }
        return arr;
    }

    static NormStats from_json(const nlohmann::json& j) {
        NormStats s;
        for (const auto& e : j) {
            s.names.push_back(e.at("name").get<std::string>());
            s.mean.push_back(e.at("mean").get<double>());
            s.stdev.push_back(e.at("std").get<double>());
        }
        return s;
    }
};

/// Fit on an arbitrary row subset (the cross-validation rounds use this with
/// the rows covered by training windows).
inline NormStats zscore_fit_rows(const SeriesFrame& frame, const std::vector<std::size_t>& rows) {
    if (rows.size() < 2) throw ParameterError("zscore_fit: need at least 2 fitting rows");
    NormStats s;
    for (const auto& c : frame.columns()) {
        double m = 0.0;
        for (std::size_t r : rows) {
            const double v = c.values.at(r);
            if (is_missing(v)) {
                throw DataError("zscore_fit: missing value in column '" + c.name +
                                "' (forward_fill first)");
            }
            m += v;
        }
        m /= static_cast<double>(rows.size());
        double var = 0.0;
        for (std::size_t r : rows) {
            const double d = c.values[r] - m;
            var += d * d;
        }
        var /= static_cast<double>(rows.size());
        s.names.push_back(c.name);
        s.mean.push_back(m);
        s.stdev.push_back(std::max(std::sqrt(var), 1e-12));
    }
    return s;
}

/// Fit on rows [0, train_end).
inline NormStats zscore_fit(const SeriesFrame& frame, std::size_t train_end) {
    if (train_end < 2) throw ParameterError("zscore_fit: train_end must be >= 2");
    if (train_end > frame.rows()) throw ParameterError("zscore_fit: train_end beyond frame");
    std::vector<std::size_t> rows(train_end);
    for (std::size_t i = 0; i < train_end; ++i) rows[i] = i;
    return zscore_fit_rows(frame, rows);
}

/// (x - mean) / std per column; stats must cover every frame column.
inline SeriesFrame zscore_apply(const SeriesFrame& frame, const NormStats& stats) {
    std::vector<Column> cols = frame.columns();
    for (auto& c : cols) {
        const auto idx = stats.find(c.name);
        if (!idx) throw SchemaError("zscore_apply: no stats for column '" + c.name + "'");
        const double m = stats.mean[*idx];
        const double inv = 1.0 / stats.stdev[*idx];
        for (auto& v : c.values) {
            if (!is_missing(v)) v = (v - m) * inv;
        }
    }
    return SeriesFrame(frame.timestamps(), std::move(cols), frame.target_name());
}

/// Exact inverse of zscore_apply for one column.
inline std::vector<double> zscore_invert(const std::vector<double>& values,
                                         const NormStats& stats, const std::string& column) {
    const auto idx = stats.find(column);
    if (!idx) throw SchemaError("zscore_invert: no stats for column '" + column + "'");
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(v * stats.stdev[*idx] + stats.mean[*idx]);
    return out;
}

} // namespace fxcast
