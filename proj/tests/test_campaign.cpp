#include "bitfault/campaign.hpp"
#include "bitfault/error.hpp"
#include "bitfault/zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace bitfault;

namespace {

struct Small {
    Model model;
    Dataset test;
};

// Two weight layers, quick to evaluate.
Small small_scenario() {
    zoo::ScenarioSpec spec;
    spec.hidden = {16};
    spec.blobs.n = 200;
    spec.blobs.d = 16;
    spec.blobs.classes = 4;
    zoo::Scenario s = zoo::build_scenario(spec);
    return {std::move(s.model), std::move(s.test)};
}

const Small& shared_small() {
    static const Small s = small_scenario();
    return s;
}

} // namespace

TEST(RateGrid, ClosedForm) {
    const auto g = rate_grid();
    ASSERT_EQ(g.size(), 64u);
    EXPECT_EQ(g[0], 1e-7);
    EXPECT_EQ(g[1], 2e-7);
    EXPECT_EQ(g[2], 3e-7);
    EXPECT_EQ(g.back(), 1.0);
    // Each value equals the decimal literal m e-e parsed by strtod.
    std::size_t i = 0;
    for (int e = 7; e >= 1; --e) {
        for (int m = 1; m <= 9; ++m) {
            std::ostringstream lit;
            lit << m << "e-" << e;
            ASSERT_EQ(g[i], std::stod(lit.str())) << lit.str();
            ++i;
        }
    }
    for (std::size_t k = 1; k < g.size(); ++k) {
        ASSERT_LT(g[k - 1], g[k]);
    }
}

TEST(Sweep, CellCountForTwoLayerModel) {
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.rates = rate_grid();
    cfg.seeds = {1, 2, 3};
    // Only the first 20 test samples keep this quick; cell count is what matters.
    const Dataset test = subset(s.test, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19}, Split::Test);
    std::size_t sunk = 0;
    const CampaignResult r = run_sweep(cfg, s.model, test, [&sunk](const CellOutcome&) { ++sunk; });
    EXPECT_EQ(r.cells.size(), 384u);
    EXPECT_EQ(sunk, 384u);
    EXPECT_EQ(r.failed_cells, 0u);
    EXPECT_EQ(r.per_rate.size(), 64u);
    // Ordered by (rate, layer position, seed).
    EXPECT_EQ(r.cells[0].layer, "fc1");
    EXPECT_EQ(r.cells[3].layer, "fc2");
    EXPECT_EQ(r.cells[5].seed, 3u);
    EXPECT_EQ(r.cells[6].rate, 2e-7);
}

TEST(Sweep, ControlCellEqualsBaseline) {
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.rates = {0.5};
    cfg.include_control = true;
    cfg.seeds = {7};
    const CampaignResult r = run_sweep(cfg, s.model, s.test);
    ASSERT_EQ(r.cells.size(), 4u);
    const double base = evaluate(s.model, s.test).accuracy;
    EXPECT_EQ(r.cells[0].rate, 0.0);
    EXPECT_EQ(r.cells[0].fault_count, 0u);
    EXPECT_EQ(*r.cells[0].accuracy, base);
    EXPECT_EQ(*r.cells[1].accuracy, base);
}

TEST(Sweep, FaultCountFollowsRate) {
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.rates = {0.01, 0.3};
    cfg.seeds = {1};
    std::vector<CellOutcome> out;
    run_sweep(cfg, s.model, s.test, [&out](const CellOutcome& c) { out.push_back(c); });
    for (const CellOutcome& c : out) {
        const std::size_t layer = s.model.index_of(c.metric.layer);
        const std::size_t n = target_param_count(s.model, layer, cfg.target, cfg.site);
        EXPECT_EQ(c.metric.fault_count, static_cast<std::uint64_t>(std::llround(c.metric.rate * static_cast<double>(n))));
        EXPECT_EQ(c.trace.size(), c.metric.fault_count);
    }
}

TEST(Sweep, ReproducibleAndWorkerIndependent) {
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.rates = {1e-3, 1e-2, 1e-1, 1.0};
    cfg.kind = FaultKind::BitFlip;
    const CampaignResult a = run_sweep(cfg, s.model, s.test);
    const CampaignResult b = run_sweep(cfg, s.model, s.test);
    cfg.workers = 3;
    const CampaignResult c = run_sweep(cfg, s.model, s.test);
    ASSERT_EQ(a.cells.size(), b.cells.size());
    ASSERT_EQ(a.cells.size(), c.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        for (const auto* other : {&b, &c}) {
            const MetricRow& x = a.cells[i];
            const MetricRow& y = other->cells[i];
            EXPECT_EQ(x.rate, y.rate);
            EXPECT_EQ(x.layer, y.layer);
            EXPECT_EQ(x.seed, y.seed);
            EXPECT_EQ(x.fault_count, y.fault_count);
            ASSERT_EQ(x.accuracy.has_value(), y.accuracy.has_value());
            if (x.accuracy) {
                EXPECT_EQ(std::bit_cast<std::uint64_t>(*x.accuracy), std::bit_cast<std::uint64_t>(*y.accuracy));
            }
        }
    }
}

TEST(Sweep, FailedCellsAreKeptWithError) {
    // Quantizing a float tensor with sign/exponent faults upstream leaves the
    // representable range; such cells must be recorded, not dropped.
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.target = TargetType::Output;
    cfg.site = SiteType::QuantizedInt;
    cfg.layers = {"fc1"};
    cfg.rates = {1.0};
    cfg.seeds = {1};
    Model big = s.model;
    (*big.layer(0).weight())[0] = 1e6f;
    const CampaignResult r = run_sweep(cfg, big, s.test);
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.failed_cells, 1u);
    EXPECT_FALSE(r.cells[0].accuracy.has_value());
    EXPECT_EQ(r.cells[0].error.rfind("RangeExceeded", 0), 0u);
    EXPECT_TRUE(std::isnan(r.per_rate[0].min_accuracy));
}

TEST(Sweep, InvalidConfig) {
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.seeds = {};
    EXPECT_THROW(run_sweep(cfg, s.model, s.test), Error);
    cfg.seeds = {1};
    cfg.site = SiteType::SparseIndex;
    EXPECT_THROW(run_sweep(cfg, s.model, s.test), Error);
    cfg.site = SiteType::DenseFloat;
    cfg.rates = {1.5};
    EXPECT_THROW(run_sweep(cfg, s.model, s.test), Error);
}

TEST(Aggregate, MinOverLayersOfSeedMeans) {
    std::vector<MetricRow> cells;
    auto add = [&cells](double rate, std::string layer, std::uint64_t seed, std::optional<double> acc) {
        MetricRow m;
        m.rate = rate;
        m.layer = std::move(layer);
        m.seed = seed;
        m.accuracy = acc;
        cells.push_back(m);
    };
    add(0.1, "a", 1, 0.9);
    add(0.1, "a", 2, 0.5);
    add(0.1, "b", 1, 0.6);
    add(0.1, "b", 2, 0.6);
    add(0.2, "a", 1, 0.3);
    add(0.2, "b", 1, std::nullopt);
    const auto s = summarize_rates(cells);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s[0].min_accuracy, 0.6);
    EXPECT_EQ(s[0].min_layer, "b");
    EXPECT_DOUBLE_EQ(s[1].min_accuracy, 0.3);
    EXPECT_EQ(s[1].min_layer, "a");
}

TEST(Aggregate, PerRateMatchesRecomputation) {
    const Small& s = shared_small();
    SweepConfig cfg;
    cfg.rates = {1e-2, 1e-1};
    const CampaignResult r = run_sweep(cfg, s.model, s.test);
    const auto again = summarize_rates(r.cells);
    ASSERT_EQ(again.size(), r.per_rate.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        EXPECT_EQ(again[i].min_accuracy, r.per_rate[i].min_accuracy);
        // And equals the min of the stored layer entries directly.
        double lo = std::numeric_limits<double>::infinity();
        for (const std::string layer : {"fc1", "fc2"}) {
            double sum = 0.0;
            int n = 0;
            for (const MetricRow& c : r.cells) {
                if (c.rate == again[i].rate && c.layer == layer) {
                    sum += *c.accuracy;
                    ++n;
                }
            }
            lo = std::min(lo, sum / n);
        }
        EXPECT_EQ(lo, r.per_rate[i].min_accuracy);
    }
}

TEST(CellSeed, DependsOnEveryPart) {
    EXPECT_EQ(cell_seed(1, 0.1, 0), cell_seed(1, 0.1, 0));
    EXPECT_NE(cell_seed(1, 0.1, 0), cell_seed(2, 0.1, 0));
    EXPECT_NE(cell_seed(1, 0.1, 0), cell_seed(1, 0.2, 0));
    EXPECT_NE(cell_seed(1, 0.1, 0), cell_seed(1, 0.1, 2));
}

TEST(Spearman, KnownValues) {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{2, 4, 6, 8, 10}), 1.0);
    EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0);
    // Hand-computed: ranks y = (1, 2.5, 2.5, 4, 5).
    const std::vector<double> y = {1, 3, 3, 4, 5};
    const double ry[] = {1, 2.5, 2.5, 4, 5};
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 5; ++i) {
        sxy += (i + 1 - 3.0) * (ry[i] - 3.0);
        sxx += (i + 1 - 3.0) * (i + 1 - 3.0);
        syy += (ry[i] - 3.0) * (ry[i] - 3.0);
    }
    EXPECT_NEAR(spearman(x, y), sxy / std::sqrt(sxx * syy), 1e-12);
    EXPECT_TRUE(std::isnan(spearman(x, std::vector<double>(5, 0.7))));
}

TEST(Bench, ZeroRowAndShape) {
    const Small& s = shared_small();
    BenchConfig cfg;
    cfg.fault_counts = {1, 10, 100};
    cfg.repetitions = 3;
    const auto rows = run_overhead_bench(s.model, s.test, cfg);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].k, 0u);
    EXPECT_EQ(rows[0].overhead, 0.0);
    for (const BenchRow& r : rows) {
        EXPECT_GT(r.t_median_s, 0.0);
        EXPECT_DOUBLE_EQ(r.overhead, r.t_median_s / rows[0].t_median_s - 1.0);
    }
    cfg.fault_counts = {s.model.weight_count() + 1};
    EXPECT_THROW(run_overhead_bench(s.model, s.test, cfg), Error);
}

TEST(Bench, WeightFaultsSpreadOverAllTensors) {
    const Small& s = shared_small();
    const auto all = sample_weight_faults(s.model, s.model.weight_count(), FaultKind::BitFlip, 3);
    std::size_t total = 0;
    for (const Fault& f : all) {
        total += f.element_indices.size();
        EXPECT_EQ(f.target, TargetType::Weight);
    }
    EXPECT_EQ(total, s.model.weight_count());
}
