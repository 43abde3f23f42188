#pragma once

#include "bitfault/campaign.hpp"
#include "bitfault/injector.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

struct sqlite3;

namespace bitfault {

struct ExperimentRecord {
    std::string experiment_id;
    std::string kind; // train | inject | sweep | bench | import
    std::string config_hash;
    std::string model_id;
    std::string dataset_id;
    std::string started_at; // ISO-8601 UTC
    std::string version;
    std::string config_json;
    std::optional<std::string> finished_at; // read side only
};

/// Identifies one sweep cell (or the single cell of an inject run).
struct CellKey {
    double rate = 0.0;
    std::string layer;
    std::uint64_t seed = 0;
};

/// Single-file SQLite store. Every table is append-only: rows are inserted
/// once and never updated or deleted. Each record call is its own
/// transaction and is durable on return. Not thread-safe; campaigns funnel
/// writes through one thread.
class ResultStore {
public:
    static constexpr int kSchemaVersion = 1;

    enum class Mode { ReadWrite, ReadOnly };

    /// Creates the schema when the file is new (ReadWrite only). Throws
    /// IoError when the file cannot be opened as a store and
    /// SchemaVersionMismatch when it carries another schema version.
    explicit ResultStore(const std::filesystem::path& path, Mode mode = Mode::ReadWrite);
    ~ResultStore();
    ResultStore(const ResultStore&) = delete;
    ResultStore& operator=(const ResultStore&) = delete;

    // Writers. DuplicateRecord on a repeated key, ForeignKeyViolation when
    // the experiment does not exist.
    void record_experiment(const ExperimentRecord& e);
    void finish_experiment(const std::string& experiment_id, const std::string& finished_at);
    void record_metric(const std::string& experiment_id, const MetricRow& m);
    void record_fault(const std::string& experiment_id, const CellKey& cell, const TraceRow& t);
    void record_monitor(const std::string& experiment_id, const CellKey& cell, const MonitorRecord& m);
    /// Metric row, its trace and its monitor records in one transaction.
    void record_cell(const std::string& experiment_id, const CellOutcome& c);
    void record_rate_summary(const std::string& experiment_id, const RateSummary& s);
    void record_bench(const std::string& experiment_id, const BenchRow& b);

    // Readers; rows come back in key order.
    std::vector<ExperimentRecord> experiments() const;
    std::optional<ExperimentRecord> experiment(const std::string& experiment_id) const;
    /// Empty id: every experiment.
    std::vector<std::pair<std::string, MetricRow>> metrics(const std::string& experiment_id = {}) const;
    std::vector<TraceRow> fault_trace(const std::string& experiment_id, const CellKey& cell) const;
    std::size_t fault_trace_count(const std::string& experiment_id, const CellKey& cell) const;
    std::vector<MonitorRecord> monitors(const std::string& experiment_id) const;
    std::vector<RateSummary> rate_summaries(const std::string& experiment_id) const;
    std::vector<BenchRow> bench(const std::string& experiment_id) const;
    std::size_t row_count(const std::string& table) const;
    std::vector<std::string> table_names() const;
    int schema_version() const;

private:
    sqlite3* db_ = nullptr;
};

struct CsvOptions {
    std::string experiment_id;      // empty: all experiments
    bool include_wall_time = false; // wall time is not reproducible
};

/// RFC-4180 (CRLF, quoted when needed) metrics table ordered by
/// (experiment_id, rate, layer, seed). Accuracy is printed with 6 significant
/// digits, rates in shortest round-trip form.
std::string metrics_csv(const ResultStore& store, const CsvOptions& opts = {});
void export_csv(const ResultStore& store, const std::filesystem::path& path, const CsvOptions& opts = {});

/// Reads a metrics CSV back, creating a placeholder `import` experiment for
/// every unknown experiment id. Throws FormatError on malformed input.
std::size_t import_csv(ResultStore& store, const std::filesystem::path& path);

/// Rate, min-accuracy rows recomputed from the stored metrics of each
/// experiment; and the bench table.
std::string accuracy_vs_rate_csv(const ResultStore& store, const std::string& experiment_id = {});
std::string overhead_csv(const ResultStore& store, const std::string& experiment_id = {});

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

} // namespace bitfault
