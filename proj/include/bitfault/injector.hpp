#pragma once

#include "bitfault/dataset.hpp"
#include "bitfault/fault.hpp"
#include "bitfault/nn.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

namespace bitfault {

struct MonitorSummary {
    float min = std::numeric_limits<float>::quiet_NaN();
    float max = std::numeric_limits<float>::quiet_NaN();
    double mean = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t nan_count = 0;
};

/// One capture per (monitor, input). For spiking models the full capture is
/// the per-step tensors stacked as [T, shape...] and the summary spans all steps.
struct MonitorRecord {
    std::string layer_name;
    TargetType target = TargetType::Output;
    CaptureMode capture = CaptureMode::FullTensor;
    std::size_t monitor_index = 0;
    std::size_t input_index = 0;
    std::int64_t timestamp_ns = 0; // wall clock, informational
    DenseTensor tensor;            // FullTensor only
    MonitorSummary summary;        // Summary only
};

/// One row per (element, bit) of every armed fault.
struct TraceRow {
    std::string layer_name;
    TargetType target = TargetType::Output;
    SiteType site = SiteType::DenseFloat;
    FaultKind kind = FaultKind::BitFlip;
    std::uint64_t element_index = 0; // flattened over the target array
    int bit_position = 0;
};

struct RunMetrics {
    double accuracy = 0.0;
    std::size_t inputs = 0;
    std::size_t correct = 0;
    std::size_t nan_outputs = 0; // inputs whose final output holds a NaN
};

struct RunResult {
    RunMetrics metrics;
    std::vector<MonitorRecord> monitors;
    std::shared_ptr<const std::vector<TraceRow>> trace; // shared with the handler
};

/// Summary statistics over the non-NaN values; min/max/mean stay NaN when
/// every value is NaN.
MonitorSummary summarize(std::span<const float> values);

/// Arms faults and monitors on one model. Construction is the setup phase:
/// everything is validated before the model is touched, then weight faults
/// are patched in place (after a bit-exact backup) and output faults and
/// monitors become forward hooks. The destructor restores if still armed.
class InjectionHandler {
public:
    /// Throws UnknownLayer, InvalidSite, IndexOutOfRange, ConflictingStuckAt
    /// or DoubleArm; the model is unchanged when it throws. The injection
    /// list is only read during construction.
    InjectionHandler(Model& model, std::span<const Injection> injections);
    ~InjectionHandler();

    InjectionHandler(const InjectionHandler&) = delete;
    InjectionHandler& operator=(const InjectionHandler&) = delete;
    InjectionHandler(InjectionHandler&&) = delete;
    InjectionHandler& operator=(InjectionHandler&&) = delete;

    /// Evaluates every sample under the armed faults. Throws NotArmed.
    RunResult run(const Dataset& data);

    /// Puts back every weight backup and drops all hooks. Throws NotArmed.
    void restore();

    bool armed() const noexcept { return armed_; }
    const std::vector<TraceRow>& trace() const noexcept { return *trace_; }
    const HookSet& hooks() const noexcept { return hooks_; }

private:
    struct Backup {
        std::size_t layer;
        DenseTensor weight;
    };
    struct MonitorSlot {
        Monitor spec;
        std::size_t layer;
        std::vector<float> captured; // current input, all steps
        std::size_t steps = 0;
    };

    Model& model_;
    bool armed_ = false;
    HookSet hooks_;
    std::vector<Backup> backups_;
    std::vector<std::unique_ptr<MonitorSlot>> monitors_;
    std::shared_ptr<const std::vector<TraceRow>> trace_ = std::make_shared<const std::vector<TraceRow>>();
};

/// Number of addressable 32-bit elements a (layer, target, site) exposes;
/// the n_params that fault rates refer to.
std::size_t target_param_count(const Model& model, std::size_t layer, TargetType target, SiteType site);

/// Evaluates a model without instrumentation, with the same metrics as run().
RunMetrics evaluate(const Model& model, const Dataset& data);

} // namespace bitfault
