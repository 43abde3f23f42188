#include "bitfault/campaign.hpp"

#include "bitfault/error.hpp"
#include "bitfault/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace bitfault {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> rank(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            rank[order[t]] = r;
        }
        i = j + 1;
    }
    return rank;
}

struct Cell {
    double rate;
    std::size_t layer; // model index
    std::uint64_t seed;
};

CellOutcome run_cell(const SweepConfig& cfg, const Cell& cell, const Model& model, const Dataset& test) {
    CellOutcome out;
    MetricRow& m = out.metric;
    m.rate = cell.rate;
    m.layer = model.layer(cell.layer).name;
    m.seed = cell.seed;
    const auto t0 = Clock::now();
    try {
        const Shape shape = model.target_shape(cell.layer, cfg.target, cfg.site);
        SampleRequest req;
        req.rate = cell.rate;
        req.shape = shape;
        req.layer = m.layer;
        req.target = cfg.target;
        req.site = cfg.site;
        req.kind = cfg.kind;
        req.seed = cell_seed(cell.seed, cell.rate, cell.layer);
        req.bit_lo = cfg.bit_lo;
        req.bit_hi = cfg.bit_hi;
        std::vector<Fault> faults = sample_faults(req);
        m.fault_count = faults.size();

        std::vector<Injection> injections;
        injections.reserve(faults.size() + cfg.monitors.size());
        for (Fault& f : faults) {
            injections.emplace_back(std::move(f));
        }
        for (const Monitor& mon : cfg.monitors) {
            injections.emplace_back(mon);
        }
        Model clone = model;
        clone.set_armed(false);
        InjectionHandler handler(clone, injections);
        RunResult r = handler.run(test);
        handler.restore();
        m.accuracy = r.metrics.accuracy;
        if (cfg.record_trace) {
            out.trace = *r.trace;
        }
        out.monitors = std::move(r.monitors);
    } catch (const Error& e) {
        m.accuracy.reset();
        m.error = e.what();
        out.trace.clear();
        out.monitors.clear();
    } catch (const std::exception& e) {
        m.accuracy.reset();
        m.error = std::string("exception: ") + e.what();
        out.trace.clear();
        out.monitors.clear();
    }
    m.wall_time_s = seconds_since(t0);
    return out;
}

} // namespace

std::vector<double> rate_grid() {
    std::vector<double> grid;
    grid.reserve(64);
    double decade = 1e7;
    for (int e = 7; e >= 1; --e) {
        for (int m = 1; m <= 9; ++m) {
            // Both operands are exact, so the quotient is the double nearest m * 10^-e.
            grid.push_back(static_cast<double>(m) / decade);
        }
        decade /= 10.0;
    }
    grid.push_back(1.0);
    return grid;
}

std::uint64_t cell_seed(std::uint64_t seed, double rate, std::size_t layer_index) {
    return derive_seed(derive_seed(seed, std::bit_cast<std::uint64_t>(rate)), layer_index);
}

std::vector<RateSummary> summarize_rates(const std::vector<MetricRow>& cells) {
    // rate -> layer -> (sum, count); layer order follows first appearance.
    std::map<double, std::vector<std::tuple<std::string, double, std::size_t>>> acc;
    for (const MetricRow& c : cells) {
        auto& layers = acc[c.rate];
        auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& t) { return std::get<0>(t) == c.layer; });
        if (it == layers.end()) {
            layers.emplace_back(c.layer, 0.0, 0);
            it = std::prev(layers.end());
        }
        if (c.accuracy) {
            std::get<1>(*it) += *c.accuracy;
            ++std::get<2>(*it);
        }
    }
    std::vector<RateSummary> out;
    for (const auto& [rate, layers] : acc) {
        RateSummary s{rate, std::nan(""), ""};
        for (const auto& [layer, sum, n] : layers) {
            if (n == 0) {
                continue;
            }
            const double mean = sum / static_cast<double>(n);
            if (std::isnan(s.min_accuracy) || mean < s.min_accuracy) {
                s.min_accuracy = mean;
                s.min_layer = layer;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

CampaignResult run_sweep(const SweepConfig& cfg, const Model& model, const Dataset& test, const CellSink& sink) {
    if (cfg.seeds.empty()) {
        throw Error(ErrorCode::InvalidArgument, "sweep needs at least one seed");
    }
    if (!site_valid_for(cfg.site, cfg.target)) {
        throw Error(ErrorCode::InvalidSite, std::string(to_string(cfg.site)) + " site needs an output target");
    }
    for (double r : cfg.rates) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "fault rate must lie in [0, 1]");
        }
    }
    std::vector<std::string> names = cfg.layers.empty() ? model.injectable_layers(cfg.target) : cfg.layers;
    std::vector<std::size_t> layer_idx;
    for (const std::string& n : names) {
        const std::size_t i = model.index_of(n);
        model.target_shape(i, cfg.target, cfg.site); // InvalidSite up front
        layer_idx.push_back(i);
    }
    std::vector<double> rates = cfg.rates;
    if (cfg.include_control) {
        rates.insert(rates.begin(), 0.0);
    }
    std::vector<Cell> cells;
    for (double r : rates) {
        for (std::size_t l : layer_idx) {
            for (std::uint64_t s : cfg.seeds) {
                cells.push_back(Cell{r, l, s});
            }
        }
    }

    CampaignResult result;
    result.cells.reserve(cells.size());
    auto deliver = [&](CellOutcome&& o) {
        if (!o.metric.accuracy) {
            ++result.failed_cells;
        }
        if (sink) {
            sink(o);
        }
        result.cells.push_back(std::move(o.metric));
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, cells.size()));
    if (workers == 1) {
        for (const Cell& c : cells) {
            deliver(run_cell(cfg, c, model, test));
        }
    } else {
        // Workers fill slots; this thread is the single writer and drains
        // them in cell order.
        std::vector<std::optional<CellOutcome>> slots(cells.size());
        std::atomic<std::size_t> next{0};
        std::mutex mu;
        std::condition_variable ready;
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < cells.size(); i = next++) {
                    CellOutcome o = run_cell(cfg, cells[i], model, test);
                    {
                        std::lock_guard lock(mu);
                        slots[i] = std::move(o);
                    }
                    ready.notify_one();
                }
            });
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            std::optional<CellOutcome> o;
            {
                std::unique_lock lock(mu);
                ready.wait(lock, [&] { return slots[i].has_value(); });
                o = std::move(slots[i]);
                slots[i].reset();
            }
            deliver(std::move(*o));
        }
    }
    result.per_rate = summarize_rates(result.cells);
    return result;
}

std::vector<Fault> sample_weight_faults(const Model& model, std::size_t k, FaultKind kind, std::uint64_t seed) {
    std::vector<std::size_t> layers;
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        if (model.layer(i).has_weight()) {
            layers.push_back(i);
            offsets.push_back(total);
            total += model.layer(i).weight()->size();
        }
    }
    if (k > total) {
        throw Error(ErrorCode::InvalidArgument,
                    std::to_string(k) + " faults exceed the model's " + std::to_string(total) + " weights");
    }
    if (k == 0) {
        return {};
    }
    // Sample over the concatenation of all weight tensors, then map back.
    SampleRequest req;
    req.rate = static_cast<double>(k) / static_cast<double>(total);
    req.shape = {total};
    req.target = TargetType::Weight;
    req.kind = kind;
    req.seed = seed;
    std::vector<Fault> flat = sample_faults(req);
    std::vector<Fault> out;
    out.reserve(flat.size());
    for (Fault& f : flat) {
        const std::size_t g = f.element_indices[0][0];
        const auto pos = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), g) - offsets.begin()) - 1;
        const Layer& l = model.layer(layers[pos]);
        f.layer_name = l.name;
        f.element_indices[0] = unflatten(g - offsets[pos], l.weight()->shape());
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<BenchRow> run_overhead_bench(const Model& model, const Dataset& data, const BenchConfig& cfg) {
    if (cfg.repetitions == 0) {
        throw Error(ErrorCode::InvalidArgument, "bench needs at least one repetition");
    }
    const std::size_t total = model.weight_count();
    for (std::size_t k : cfg.fault_counts) {
        if (k > total) {
            throw Error(ErrorCode::InvalidArgument,
                        std::to_string(k) + " faults exceed the model's " + std::to_string(total) + " weights");
        }
    }
    Model clone = model;
    clone.set_armed(false);

    auto time_baseline = [&] {
        const auto t0 = Clock::now();
        evaluate(clone, data);
        return seconds_since(t0);
    };
    auto time_faulted = [&](const std::vector<Fault>& faults) {
        const std::vector<Injection> inj(faults.begin(), faults.end());
        const auto t0 = Clock::now();
        {
            InjectionHandler handler(clone, inj);
            handler.run(data);
            handler.restore();
        }
        return seconds_since(t0);
    };
    std::vector<std::size_t> ks{0};
    std::vector<std::vector<Fault>> fault_sets(1);
    for (std::size_t k : cfg.fault_counts) {
        if (k != 0) {
            ks.push_back(k);
            fault_sets.push_back(sample_weight_faults(model, k, cfg.kind, derive_seed(cfg.seed, k)));
        }
    }
    auto once = [&](std::size_t i) { return i == 0 ? time_baseline() : time_faulted(fault_sets[i]); };

    // Round-robin over k so clock and cache drift hit every row alike.
    std::vector<std::vector<double>> times(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        once(i); // warmup
    }
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            times[i].push_back(once(i));
        }
    }
    const double t0 = median(std::move(times[0]));
    std::vector<BenchRow> rows{BenchRow{0, t0, 0.0}};
    for (std::size_t i = 1; i < ks.size(); ++i) {
        const double tk = median(std::move(times[i]));
        rows.push_back(BenchRow{ks[i], tk, tk / t0 - 1.0});
    }
    return rows;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::ShapeMismatch, "spearman needs equal-length series");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        return std::nan("");
    }
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double mean = (static_cast<double>(n) + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return std::nan("");
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace bitfault
