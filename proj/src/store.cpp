#include "bitfault/store.hpp"

#include "bitfault/error.hpp"
#include "bitfault/serialize.hpp"

#include <sqlite3.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace bitfault {
namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE experiments (
    experiment_id TEXT PRIMARY KEY,
    kind          TEXT NOT NULL,
    config_hash   TEXT NOT NULL,
    model_id      TEXT NOT NULL,
    dataset_id    TEXT NOT NULL,
    started_at    TEXT NOT NULL,
    version       TEXT NOT NULL,
    config_json   TEXT NOT NULL
);
CREATE TABLE experiment_end (
    experiment_id TEXT PRIMARY KEY REFERENCES experiments(experiment_id),
    finished_at   TEXT NOT NULL
);
CREATE TABLE metrics (
    experiment_id TEXT NOT NULL REFERENCES experiments(experiment_id),
    rate          REAL NOT NULL,
    layer         TEXT NOT NULL,
    seed          INTEGER NOT NULL,
    accuracy      REAL,
    fault_count   INTEGER NOT NULL,
    wall_time_s   REAL NOT NULL,
    error         TEXT,
    PRIMARY KEY (experiment_id, rate, layer, seed)
);
CREATE TABLE fault_trace (
    experiment_id TEXT NOT NULL REFERENCES experiments(experiment_id),
    rate          REAL NOT NULL,
    cell_layer    TEXT NOT NULL,
    seed          INTEGER NOT NULL,
    layer         TEXT NOT NULL,
    target        TEXT NOT NULL,
    site          TEXT NOT NULL,
    kind          TEXT NOT NULL,
    element_index INTEGER NOT NULL,
    bit_position  INTEGER NOT NULL
);
CREATE INDEX fault_trace_cell ON fault_trace (experiment_id, rate, cell_layer, seed);
CREATE TABLE monitors (
    experiment_id TEXT NOT NULL REFERENCES experiments(experiment_id),
    rate          REAL NOT NULL,
    cell_layer    TEXT NOT NULL,
    seed          INTEGER NOT NULL,
    monitor_index INTEGER NOT NULL,
    input_index   INTEGER NOT NULL,
    layer         TEXT NOT NULL,
    target        TEXT NOT NULL,
    capture       TEXT NOT NULL,
    timestamp_ns  INTEGER NOT NULL,
    payload       BLOB,
    min_value     REAL,
    max_value     REAL,
    mean_value    REAL,
    nan_count     INTEGER,
    PRIMARY KEY (experiment_id, rate, cell_layer, seed, monitor_index, input_index)
);
CREATE TABLE rate_summary (
    experiment_id TEXT NOT NULL REFERENCES experiments(experiment_id),
    rate          REAL NOT NULL,
    min_accuracy  REAL,
    min_layer     TEXT NOT NULL,
    PRIMARY KEY (experiment_id, rate)
);
CREATE TABLE bench (
    experiment_id TEXT NOT NULL REFERENCES experiments(experiment_id),
    k             INTEGER NOT NULL,
    t_median_s    REAL NOT NULL,
    overhead      REAL NOT NULL,
    PRIMARY KEY (experiment_id, k)
);
)sql";

const char* const kTables[] = {"experiments", "experiment_end", "metrics", "fault_trace",
                               "monitors",    "rate_summary",   "bench"};

[[noreturn]] void fail(sqlite3* db, const std::string& what) {
    const int ext = sqlite3_extended_errcode(db);
    const std::string msg = what + ": " + sqlite3_errmsg(db);
    if (ext == SQLITE_CONSTRAINT_FOREIGNKEY) {
        throw Error(ErrorCode::ForeignKeyViolation, msg);
    }
    if (ext == SQLITE_CONSTRAINT_PRIMARYKEY || ext == SQLITE_CONSTRAINT_UNIQUE) {
        throw Error(ErrorCode::DuplicateRecord, msg);
    }
    throw Error(ErrorCode::IoError, msg);
}

void exec(sqlite3* db, const std::string& sql) {
    if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, nullptr) != SQLITE_OK) {
        fail(db, "sql");
    }
}

// RAII prepared statement with 1-based positional binds.
class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &s_, nullptr) != SQLITE_OK) {
            fail(db, "prepare");
        }
    }
    ~Stmt() { sqlite3_finalize(s_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, const std::string& v) {
        sqlite3_bind_text(s_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind(int i, double v) {
        if (std::isnan(v)) {
            sqlite3_bind_null(s_, i);
        } else {
            sqlite3_bind_double(s_, i, v);
        }
        return *this;
    }
    Stmt& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(s_, i, v);
        return *this;
    }
    Stmt& bind(int i, std::uint64_t v) { return bind(i, static_cast<std::int64_t>(v)); }
    Stmt& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
    Stmt& bind(int i, const std::optional<double>& v) {
        if (v) {
            return bind(i, *v);
        }
        sqlite3_bind_null(s_, i);
        return *this;
    }
    Stmt& bind_blob(int i, const std::vector<std::uint8_t>& v) {
        sqlite3_bind_blob(s_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind_null(int i) {
        sqlite3_bind_null(s_, i);
        return *this;
    }
    Stmt& bind_text_or_null(int i, const std::string& v) { return v.empty() ? bind_null(i) : bind(i, v); }

    /// True while rows remain.
    bool step() {
        const int rc = sqlite3_step(s_);
        if (rc == SQLITE_ROW) {
            return true;
        }
        if (rc == SQLITE_DONE) {
            return false;
        }
        fail(db_, "step");
    }
    void run() {
        step();
        sqlite3_reset(s_);
        sqlite3_clear_bindings(s_);
    }

    bool is_null(int c) const { return sqlite3_column_type(s_, c) == SQLITE_NULL; }
    std::string text(int c) const {
        const auto* p = sqlite3_column_text(s_, c);
        return p == nullptr ? std::string() : std::string(reinterpret_cast<const char*>(p));
    }
    double real(int c) const { return is_null(c) ? std::nan("") : sqlite3_column_double(s_, c); }
    std::int64_t integer(int c) const { return sqlite3_column_int64(s_, c); }
    std::vector<std::uint8_t> blob(int c) const {
        const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(s_, c));
        const int n = sqlite3_column_bytes(s_, c);
        return p == nullptr ? std::vector<std::uint8_t>() : std::vector<std::uint8_t>(p, p + n);
    }

private:
    sqlite3* db_;
    sqlite3_stmt* s_ = nullptr;
};

class Transaction {
public:
    explicit Transaction(sqlite3* db) : db_(db) { exec(db, "BEGIN IMMEDIATE"); }
    ~Transaction() {
        if (!done_) {
            sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
        }
    }
    void commit() {
        exec(db_, "COMMIT");
        done_ = true;
    }

private:
    sqlite3* db_;
    bool done_ = false;
};

void insert_metric(sqlite3* db, const std::string& id, const MetricRow& m) {
    Stmt s(db, "INSERT INTO metrics VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)");
    s.bind(1, id).bind(2, m.rate).bind(3, m.layer).bind(4, m.seed).bind(5, m.accuracy);
    s.bind(6, m.fault_count).bind(7, m.wall_time_s).bind_text_or_null(8, m.error);
    s.run();
}

void insert_faults(sqlite3* db, const std::string& id, const CellKey& cell, std::span<const TraceRow> rows) {
    Stmt s(db, "INSERT INTO fault_trace VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)");
    for (const TraceRow& t : rows) {
        s.bind(1, id).bind(2, cell.rate).bind(3, cell.layer).bind(4, cell.seed).bind(5, t.layer_name);
        s.bind(6, std::string(to_string(t.target))).bind(7, std::string(to_string(t.site)));
        s.bind(8, std::string(to_string(t.kind))).bind(9, t.element_index).bind(10, t.bit_position);
        s.run();
    }
}

void insert_monitors(sqlite3* db, const std::string& id, const CellKey& cell, std::span<const MonitorRecord> rows) {
    Stmt s(db, "INSERT INTO monitors VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15)");
    for (const MonitorRecord& m : rows) {
        s.bind(1, id).bind(2, cell.rate).bind(3, cell.layer).bind(4, cell.seed);
        s.bind(5, static_cast<std::uint64_t>(m.monitor_index)).bind(6, static_cast<std::uint64_t>(m.input_index));
        s.bind(7, m.layer_name).bind(8, std::string(to_string(m.target))).bind(9, std::string(to_string(m.capture)));
        s.bind(10, m.timestamp_ns);
        if (m.capture == CaptureMode::FullTensor) {
            s.bind_blob(11, encode(m.tensor)).bind_null(12).bind_null(13).bind_null(14).bind_null(15);
        } else {
            s.bind_null(11).bind(12, static_cast<double>(m.summary.min)).bind(13, static_cast<double>(m.summary.max));
            s.bind(14, m.summary.mean).bind(15, m.summary.nan_count);
        }
        s.run();
    }
}

std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\r\n") == std::string::npos) {
        return v;
    }
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

std::string format_accuracy(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// RFC-4180 records; accepts CRLF or LF line ends.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
            rows.push_back(std::move(row));
            row.clear();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) {
        throw Error(ErrorCode::FormatError, "unterminated quoted CSV field");
    }
    if (field_started || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_double(const std::string& s, const char* what) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw Error(ErrorCode::FormatError, std::string("bad ") + what + " '" + s + "'");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw Error(ErrorCode::FormatError, std::string("bad ") + what + " '" + s + "'");
    }
    return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
}

const char* kMetricsHeader = "experiment_id,rate,layer,seed,accuracy,fault_count,error";

} // namespace

ResultStore::ResultStore(const std::filesystem::path& path, Mode mode) {
    const int flags = mode == Mode::ReadOnly ? SQLITE_OPEN_READONLY : SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
        const std::string msg = db_ != nullptr ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw Error(ErrorCode::IoError, "cannot open store " + path.string() + ": " + msg);
    }
    try {
        exec(db_, "PRAGMA foreign_keys = ON");
        sqlite3_busy_timeout(db_, 5000);
        if (mode == Mode::ReadWrite) {
            // WAL commits survive a process kill without an fsync per cell.
            exec(db_, "PRAGMA journal_mode = WAL");
            exec(db_, "PRAGMA synchronous = NORMAL");
        }
        const int version = schema_version();
        std::size_t tables = 0;
        {
            Stmt s(db_, "SELECT count(*) FROM sqlite_master WHERE type = 'table'");
            s.step();
            tables = static_cast<std::size_t>(s.integer(0));
        }
        if (version == 0 && tables == 0 && mode == Mode::ReadOnly) {
            throw Error(ErrorCode::IoError, path.string() + " holds no store schema");
        }
        if (version == 0 && tables == 0) {
            Transaction tx(db_);
            exec(db_, kSchema);
            for (const char* t : kTables) {
                const std::string name(t);
                exec(db_, "CREATE TRIGGER " + name + "_no_update BEFORE UPDATE ON " + name +
                              " BEGIN SELECT RAISE(ABORT, 'append-only table'); END;");
                exec(db_, "CREATE TRIGGER " + name + "_no_delete BEFORE DELETE ON " + name +
                              " BEGIN SELECT RAISE(ABORT, 'append-only table'); END;");
            }
            exec(db_, "PRAGMA user_version = " + std::to_string(kSchemaVersion));
            tx.commit();
        } else if (version != kSchemaVersion) {
            throw Error(ErrorCode::SchemaVersionMismatch, "store schema version " + std::to_string(version) +
                                                              ", expected " + std::to_string(kSchemaVersion));
        }
    } catch (...) {
        sqlite3_close(db_);
        db_ = nullptr;
        throw;
    }
}

ResultStore::~ResultStore() { sqlite3_close(db_); }

int ResultStore::schema_version() const {
    Stmt s(db_, "PRAGMA user_version");
    s.step();
    return static_cast<int>(s.integer(0));
}

void ResultStore::record_experiment(const ExperimentRecord& e) {
    Stmt s(db_, "INSERT INTO experiments VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)");
    s.bind(1, e.experiment_id).bind(2, e.kind).bind(3, e.config_hash).bind(4, e.model_id).bind(5, e.dataset_id);
    s.bind(6, e.started_at).bind(7, e.version).bind(8, e.config_json);
    s.run();
}

void ResultStore::finish_experiment(const std::string& experiment_id, const std::string& finished_at) {
    Stmt s(db_, "INSERT INTO experiment_end VALUES (?1, ?2)");
    s.bind(1, experiment_id).bind(2, finished_at);
    s.run();
}

void ResultStore::record_metric(const std::string& experiment_id, const MetricRow& m) {
    insert_metric(db_, experiment_id, m);
}

void ResultStore::record_fault(const std::string& experiment_id, const CellKey& cell, const TraceRow& t) {
    insert_faults(db_, experiment_id, cell, std::span<const TraceRow>(&t, 1));
}

void ResultStore::record_monitor(const std::string& experiment_id, const CellKey& cell, const MonitorRecord& m) {
    insert_monitors(db_, experiment_id, cell, std::span<const MonitorRecord>(&m, 1));
}

void ResultStore::record_cell(const std::string& experiment_id, const CellOutcome& c) {
    const CellKey key{c.metric.rate, c.metric.layer, c.metric.seed};
    Transaction tx(db_);
    insert_metric(db_, experiment_id, c.metric);
    insert_faults(db_, experiment_id, key, c.trace);
    insert_monitors(db_, experiment_id, key, c.monitors);
    tx.commit();
}

void ResultStore::record_rate_summary(const std::string& experiment_id, const RateSummary& r) {
    Stmt s(db_, "INSERT INTO rate_summary VALUES (?1, ?2, ?3, ?4)");
    s.bind(1, experiment_id).bind(2, r.rate).bind(3, r.min_accuracy).bind(4, r.min_layer);
    s.run();
}

void ResultStore::record_bench(const std::string& experiment_id, const BenchRow& b) {
    Stmt s(db_, "INSERT INTO bench VALUES (?1, ?2, ?3, ?4)");
    s.bind(1, experiment_id).bind(2, static_cast<std::uint64_t>(b.k)).bind(3, b.t_median_s).bind(4, b.overhead);
    s.run();
}

std::vector<ExperimentRecord> ResultStore::experiments() const {
    Stmt s(db_, "SELECT e.experiment_id, kind, config_hash, model_id, dataset_id, started_at, version, config_json, "
                "x.finished_at FROM experiments e LEFT JOIN experiment_end x USING (experiment_id) "
                "ORDER BY e.experiment_id");
    std::vector<ExperimentRecord> out;
    while (s.step()) {
        ExperimentRecord e{s.text(0), s.text(1), s.text(2), s.text(3), s.text(4), s.text(5), s.text(6), s.text(7), {}};
        if (!s.is_null(8)) {
            e.finished_at = s.text(8);
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::optional<ExperimentRecord> ResultStore::experiment(const std::string& experiment_id) const {
    for (ExperimentRecord& e : experiments()) {
        if (e.experiment_id == experiment_id) {
            return std::move(e);
        }
    }
    return std::nullopt;
}

std::vector<std::pair<std::string, MetricRow>> ResultStore::metrics(const std::string& experiment_id) const {
    Stmt s(db_, "SELECT experiment_id, rate, layer, seed, accuracy, fault_count, wall_time_s, error FROM metrics "
                "WHERE ?1 = '' OR experiment_id = ?1 ORDER BY experiment_id, rate, layer, seed");
    s.bind(1, experiment_id);
    std::vector<std::pair<std::string, MetricRow>> out;
    while (s.step()) {
        MetricRow m;
        m.rate = s.real(1);
        m.layer = s.text(2);
        m.seed = static_cast<std::uint64_t>(s.integer(3));
        if (!s.is_null(4)) {
            m.accuracy = s.real(4);
        }
        m.fault_count = static_cast<std::uint64_t>(s.integer(5));
        m.wall_time_s = s.real(6);
        m.error = s.text(7);
        out.emplace_back(s.text(0), std::move(m));
    }
    return out;
}

std::vector<TraceRow> ResultStore::fault_trace(const std::string& experiment_id, const CellKey& cell) const {
    Stmt s(db_, "SELECT layer, target, site, kind, element_index, bit_position FROM fault_trace "
                "WHERE experiment_id = ?1 AND rate = ?2 AND cell_layer = ?3 AND seed = ?4 ORDER BY rowid");
    s.bind(1, experiment_id).bind(2, cell.rate).bind(3, cell.layer).bind(4, cell.seed);
    std::vector<TraceRow> out;
    while (s.step()) {
        out.push_back(TraceRow{s.text(0), parse_target(s.text(1)), parse_site(s.text(2)),
                               parse_fault_kind(s.text(3)), static_cast<std::uint64_t>(s.integer(4)),
                               static_cast<int>(s.integer(5))});
    }
    return out;
}

std::size_t ResultStore::fault_trace_count(const std::string& experiment_id, const CellKey& cell) const {
    Stmt s(db_, "SELECT count(*) FROM fault_trace "
                "WHERE experiment_id = ?1 AND rate = ?2 AND cell_layer = ?3 AND seed = ?4");
    s.bind(1, experiment_id).bind(2, cell.rate).bind(3, cell.layer).bind(4, cell.seed);
    s.step();
    return static_cast<std::size_t>(s.integer(0));
}

std::vector<MonitorRecord> ResultStore::monitors(const std::string& experiment_id) const {
    Stmt s(db_, "SELECT monitor_index, input_index, layer, target, capture, timestamp_ns, payload, min_value, "
                "max_value, mean_value, nan_count FROM monitors WHERE experiment_id = ?1 "
                "ORDER BY rate, cell_layer, seed, input_index, monitor_index");
    s.bind(1, experiment_id);
    std::vector<MonitorRecord> out;
    while (s.step()) {
        MonitorRecord m;
        m.monitor_index = static_cast<std::size_t>(s.integer(0));
        m.input_index = static_cast<std::size_t>(s.integer(1));
        m.layer_name = s.text(2);
        m.target = parse_target(s.text(3));
        m.capture = parse_capture(s.text(4));
        m.timestamp_ns = s.integer(5);
        if (m.capture == CaptureMode::FullTensor) {
            m.tensor = decode_dense(s.blob(6));
        } else {
            m.summary.min = static_cast<float>(s.real(7));
            m.summary.max = static_cast<float>(s.real(8));
            m.summary.mean = s.real(9);
            m.summary.nan_count = static_cast<std::uint64_t>(s.integer(10));
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<RateSummary> ResultStore::rate_summaries(const std::string& experiment_id) const {
    Stmt s(db_, "SELECT rate, min_accuracy, min_layer FROM rate_summary WHERE experiment_id = ?1 ORDER BY rate");
    s.bind(1, experiment_id);
    std::vector<RateSummary> out;
    while (s.step()) {
        out.push_back(RateSummary{s.real(0), s.real(1), s.text(2)});
    }
    return out;
}

std::vector<BenchRow> ResultStore::bench(const std::string& experiment_id) const {
    Stmt s(db_, "SELECT k, t_median_s, overhead FROM bench WHERE ?1 = '' OR experiment_id = ?1 "
                "ORDER BY experiment_id, k");
    s.bind(1, experiment_id);
    std::vector<BenchRow> out;
    while (s.step()) {
        out.push_back(BenchRow{static_cast<std::size_t>(s.integer(0)), s.real(1), s.real(2)});
    }
    return out;
}

std::size_t ResultStore::row_count(const std::string& table) const {
    bool known = false;
    for (const char* t : kTables) {
        known = known || table == t;
    }
    if (!known) {
        throw Error(ErrorCode::InvalidArgument, "unknown table '" + table + "'");
    }
    Stmt s(db_, ("SELECT count(*) FROM " + table).c_str());
    s.step();
    return static_cast<std::size_t>(s.integer(0));
}

std::vector<std::string> ResultStore::table_names() const {
    Stmt s(db_, "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name");
    std::vector<std::string> out;
    while (s.step()) {
        out.push_back(s.text(0));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string metrics_csv(const ResultStore& store, const CsvOptions& opts) {
    std::string out = kMetricsHeader;
    if (opts.include_wall_time) {
        out += ",wall_time_s";
    }
    out += "\r\n";
    for (const auto& [id, m] : store.metrics(opts.experiment_id)) {
        out += csv_field(id) + ',' + format_double(m.rate) + ',' + csv_field(m.layer) + ',' + std::to_string(m.seed) +
               ',' + (m.accuracy ? format_accuracy(*m.accuracy) : std::string()) + ',' +
               std::to_string(m.fault_count) + ',' + csv_field(m.error);
        if (opts.include_wall_time) {
            out += ',' + format_double(m.wall_time_s);
        }
        out += "\r\n";
    }
    return out;
}

void export_csv(const ResultStore& store, const std::filesystem::path& path, const CsvOptions& opts) {
    write_text(path, metrics_csv(store, opts));
}

std::size_t import_csv(ResultStore& store, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const auto rows = parse_csv(buf.str());
    if (rows.empty()) {
        throw Error(ErrorCode::FormatError, "CSV has no header");
    }
    const auto& header = rows.front();
    const std::size_t base = 7;
    const bool wall = header.size() == base + 1 && header.back() == "wall_time_s";
    {
        std::string joined;
        for (std::size_t i = 0; i < std::min(header.size(), base); ++i) {
            joined += (i ? "," : "") + header[i];
        }
        if (joined != kMetricsHeader || (header.size() != base && !wall)) {
            throw Error(ErrorCode::FormatError, "unexpected metrics CSV header");
        }
    }
    std::set<std::string> known;
    for (const ExperimentRecord& e : store.experiments()) {
        known.insert(e.experiment_id);
    }
    std::size_t n = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != header.size()) {
            throw Error(ErrorCode::FormatError, "CSV row " + std::to_string(r) + " has " + std::to_string(f.size()) +
                                                    " fields, expected " + std::to_string(header.size()));
        }
        const std::string& id = f[0];
        if (known.insert(id).second) {
            store.record_experiment(ExperimentRecord{id, "import", "", "", "", utc_timestamp(), "", "{}", {}});
        }
        MetricRow m;
        m.rate = parse_double(f[1], "rate");
        m.layer = f[2];
        m.seed = parse_u64(f[3], "seed");
        if (!f[4].empty()) {
            m.accuracy = parse_double(f[4], "accuracy");
        }
        m.fault_count = parse_u64(f[5], "fault_count");
        m.error = f[6];
        m.wall_time_s = wall ? parse_double(f[7], "wall_time_s") : 0.0;
        store.record_metric(id, m);
        ++n;
    }
    return n;
}

std::string accuracy_vs_rate_csv(const ResultStore& store, const std::string& experiment_id) {
    std::string out = "experiment_id,rate,min_accuracy,min_layer\r\n";
    std::map<std::string, std::vector<MetricRow>> by_exp;
    for (auto& [id, m] : store.metrics(experiment_id)) {
        by_exp[id].push_back(std::move(m));
    }
    for (const ExperimentRecord& e : store.experiments()) {
        auto it = by_exp.find(e.experiment_id);
        if (e.kind != "sweep" || it == by_exp.end()) {
            continue;
        }
        for (const RateSummary& s : summarize_rates(it->second)) {
            out += csv_field(e.experiment_id) + ',' + format_double(s.rate) + ',' +
                   (std::isnan(s.min_accuracy) ? std::string() : format_accuracy(s.min_accuracy)) + ',' +
                   csv_field(s.min_layer) + "\r\n";
        }
    }
    return out;
}

std::string overhead_csv(const ResultStore& store, const std::string& experiment_id) {
    std::string out = "experiment_id,k,t_median_s,overhead\r\n";
    for (const ExperimentRecord& e : store.experiments()) {
        if (e.kind != "bench" || (!experiment_id.empty() && e.experiment_id != experiment_id)) {
            continue;
        }
        for (const BenchRow& b : store.bench(e.experiment_id)) {
            out += csv_field(e.experiment_id) + ',' + std::to_string(b.k) + ',' + format_double(b.t_median_s) + ',' +
                   format_double(b.overhead) + "\r\n";
        }
    }
    return out;
}

} // namespace bitfault
