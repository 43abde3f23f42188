#pragma once

#include "bitfault/dataset.hpp"
#include "bitfault/fault.hpp"
#include "bitfault/injector.hpp"
#include "bitfault/nn.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bitfault {

/// m * 10^-e for e = 7..1 and m = 1..9, then 1.0; 64 ascending values.
std::vector<double> rate_grid();

struct SweepConfig {
    std::string model_id;
    std::string dataset_id;
    TargetType target = TargetType::Weight;
    SiteType site = SiteType::DenseFloat;
    FaultKind kind = FaultKind::BitFlip;
    int bit_lo = 0;
    int bit_hi = 31;
    std::vector<double> rates = rate_grid();
    bool include_control = false;   // prepend rate 0
    std::vector<std::string> layers; // empty: every injectable layer
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<Monitor> monitors;   // armed in every cell
    std::size_t workers = 1;
    bool record_trace = true;
};

/// One (rate, layer, seed) cell.
struct MetricRow {
    double rate = 0.0;
    std::string layer;
    std::uint64_t seed = 0;
    std::optional<double> accuracy; // unset when the cell failed
    std::uint64_t fault_count = 0;
    double wall_time_s = 0.0;
    std::string error; // "<ErrorCode>: message" for failed cells
};

struct CellOutcome {
    MetricRow metric;
    std::vector<TraceRow> trace;
    std::vector<MonitorRecord> monitors;
};

struct RateSummary {
    double rate = 0.0;
    /// Minimum over layers of the seed-mean accuracy; NaN if every cell failed.
    double min_accuracy = 0.0;
    std::string min_layer;
};

struct CampaignResult {
    std::vector<MetricRow> cells; // ordered by (rate, layer position, seed)
    std::vector<RateSummary> per_rate;
    std::size_t failed_cells = 0;
};

/// Called once per cell, on the calling thread, in cell order.
using CellSink = std::function<void(const CellOutcome&)>;

/// Fault seed of one cell; depends only on the base seed, the rate value and
/// the layer's position in the model.
std::uint64_t cell_seed(std::uint64_t seed, double rate, std::size_t layer_index);

/// Sweeps rates x layers x seeds. Each cell clones the model, samples
/// round(rate * n_params) faults into one layer, arms, evaluates on `test`,
/// and restores. Failed cells are kept with their error, never dropped.
CampaignResult run_sweep(const SweepConfig& cfg, const Model& model, const Dataset& test, const CellSink& sink = {});

/// Min-over-layers of seed-mean accuracy, recomputed from cells.
std::vector<RateSummary> summarize_rates(const std::vector<MetricRow>& cells);

struct BenchRow {
    std::size_t k = 0;
    double t_median_s = 0.0;
    double overhead = 0.0; // t(k) / t(0) - 1
};

struct BenchConfig {
    std::vector<std::size_t> fault_counts = {1, 10, 100, 1000, 10000, 100000};
    std::size_t repetitions = 5;
    std::uint64_t seed = 1;
    FaultKind kind = FaultKind::BitFlip;
};

/// Weight faults spread uniformly over all weight tensors of the model.
std::vector<Fault> sample_weight_faults(const Model& model, std::size_t k, FaultKind kind, std::uint64_t seed);

/// Times setup + run + restore for each k (faults sampled outside the timed
/// region) against the uninstrumented evaluation, which is the k = 0 row.
/// Each timing is the median of `repetitions` runs after one warmup.
/// Throws InvalidArgument when a count exceeds the model's weight count.
std::vector<BenchRow> run_overhead_bench(const Model& model, const Dataset& data, const BenchConfig& cfg);

/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

} // namespace bitfault
