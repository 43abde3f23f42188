// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "bitfault/campaign.hpp"
#include "bitfault/cli.hpp"
#include "bitfault/error.hpp"
#include "bitfault/injector.hpp"
#include "bitfault/rng.hpp"
#include "bitfault/serialize.hpp"
#include "bitfault/store.hpp"
#include "bitfault/zoo.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace bitfault;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* id, const std::function<Verdict()>& check) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {false, std::string("threw ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s %s %s (%.2fs)\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str(), s);
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "bitfault_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int cli(std::vector<std::string> args, json* summary = nullptr) {
    args.insert(args.begin(), "bitfault");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) {
        std::fprintf(stderr, "bitfault %s failed (%d): %s\n", args[1].c_str(), code, err.str().c_str());
    }
    if (summary != nullptr && code == 0) {
        *summary = json::parse(out.str());
    }
    return code;
}

fs::path write_config(const std::string& name, const json& doc) {
    const fs::path p = workdir() / name;
    std::ofstream(p) << doc.dump(2);
    return p;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) { return read_file(p); }

// ---------------------------------------------------------------- QZ-1

Verdict qz1() {
    const auto t0 = Clock::now();
    SplitMix64 g(20240101);
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const auto x = static_cast<float>(g.uniform(-100.0, 100.0));
        const DenseTensor t({1}, {x});
        const float y = dequantize(quantize(t))[0];
        worst = std::max(worst, std::fabs(static_cast<double>(y) - static_cast<double>(x)));
    }
    const double s = since(t0);
    return {worst <= 6e-8 && s < 5.0, fmt("max_err=%.3g bound=6e-08 samples=100000", worst)};
}

// ---------------------------------------------------------------- MK-1

// Decides each output bit from the fault definitions alone.
std::uint32_t per_bit_oracle(std::uint32_t x, const std::vector<std::pair<int, FaultKind>>& events) {
    std::uint32_t y = 0;
    for (int b = 0; b < 32; ++b) {
        std::uint32_t v = (x >> b) & 1u;
        int flips = 0;
        for (const auto& [bit, kind] : events) {
            if (bit != b) {
                continue;
            }
            if (kind == FaultKind::StuckAtZero) {
                v = 0;
            } else if (kind == FaultKind::StuckAtOne) {
                v = 1;
            } else {
                ++flips;
            }
        }
        v ^= flips > 0 ? 1u : 0u;
        y |= v << b;
    }
    return y;
}

Verdict mk1() {
    const auto t0 = Clock::now();
    SplitMix64 g(777);
    std::size_t mismatches = 0;
    std::size_t faults_total = 0;
    for (int c = 0; c < 10000; ++c) {
        Shape shape{1 + g.below(8), 1 + g.below(8)};
        const std::size_t n = numel(shape);
        std::vector<BitPattern32> x(n);
        for (auto& w : x) {
            w.raw = static_cast<std::uint32_t>(g.next());
        }
        std::vector<Fault> faults;
        std::vector<std::vector<std::pair<int, FaultKind>>> events(n);
        const std::size_t nf = g.below(10);
        for (std::size_t i = 0; i < nf; ++i) {
            Fault f;
            f.layer_name = "t";
            f.kind = static_cast<FaultKind>(g.below(3));
            const std::size_t elems = 1 + g.below(3);
            std::vector<std::pair<std::size_t, int>> hits;
            bool clash = false;
            for (std::size_t e = 0; e < elems; ++e) {
                const std::size_t flat = g.below(n);
                std::vector<int> bits;
                const std::size_t nb = 1 + g.below(3);
                for (std::size_t k = 0; k < nb; ++k) {
                    const int b = static_cast<int>(g.below(32));
                    if (std::find(bits.begin(), bits.end(), b) != bits.end()) {
                        continue;
                    }
                    bits.push_back(b);
                    for (const auto& [pb, pk] : events[flat]) {
                        if (pb == b && pk != FaultKind::BitFlip && f.kind != FaultKind::BitFlip && pk != f.kind) {
                            clash = true;
                        }
                    }
                    hits.emplace_back(flat, b);
                }
                f.element_indices.push_back(unflatten(flat, shape));
                f.bit_positions.push_back(bits);
            }
            if (clash) {
                continue;
            }
            for (const auto& [flat, b] : hits) {
                events[flat].emplace_back(b, f.kind);
            }
            faults.push_back(std::move(f));
        }
        faults_total += faults.size();
        const auto y = apply_mask(x, make_mask(faults, shape));
        for (std::size_t i = 0; i < n; ++i) {
            mismatches += y[i].raw != per_bit_oracle(x[i].raw, events[i]);
        }
    }
    const double s = since(t0);
    return {mismatches == 0 && s < 30.0, fmt("cases=10000 faults=%zu mismatches=%zu", faults_total, mismatches)};
}

// ---------------------------------------------------------------- RS-1

std::vector<std::uint8_t> weight_bytes(const Model& m) {
    std::vector<std::uint8_t> out;
    for (const Layer& l : m.layers()) {
        if (!l.has_weight()) {
            continue;
        }
        for (const DenseTensor* t : {l.weight(), l.bias()}) {
            const auto* p = reinterpret_cast<const std::uint8_t*>(t->data().data());
            out.insert(out.end(), p, p + t->size() * 4);
        }
    }
    return out;
}

std::vector<Injection> random_fault_set(const Model& m, SplitMix64& g) {
    std::vector<Injection> inj;
    const std::size_t nf = 1 + g.below(8);
    for (std::size_t i = 0; i < nf; ++i) {
        const std::size_t layer = g.below(m.layer_count());
        Fault f;
        f.layer_name = m.layer(layer).name;
        const std::size_t pick = g.below(4);
        if (pick == 0 && m.layer(layer).has_weight()) {
            f.target = TargetType::Weight;
            f.site = SiteType::DenseFloat;
        } else {
            f.target = TargetType::Output;
            f.site = pick == 2 ? SiteType::QuantizedInt : pick == 3 ? SiteType::SparseIndex : SiteType::DenseFloat;
        }
        f.kind = static_cast<FaultKind>(g.below(3));
        const Shape shape = m.target_shape(layer, f.target, f.site);
        const std::size_t elems = 1 + g.below(4);
        for (std::size_t e = 0; e < elems; ++e) {
            f.element_indices.push_back(unflatten(g.below(numel(shape)), shape));
            f.bit_positions.push_back({static_cast<int>(g.below(32))});
        }
        inj.emplace_back(std::move(f));
    }
    if (g.below(2) == 0) {
        inj.emplace_back(Monitor{m.layer(g.below(m.layer_count())).name, TargetType::Output, CaptureMode::Summary});
    }
    return inj;
}

Verdict rs1(zoo::Scenario& mlp, zoo::Scenario& snn) {
    SplitMix64 g(4242);
    std::size_t mismatches = 0, armed = 0, run_errors = 0, setup_errors = 0;
    for (int trial = 0; trial < 100; ++trial) {
        zoo::Scenario& s = trial % 2 == 0 ? mlp : snn;
        Model& m = s.model;
        // Sample a third of the test split per trial to bound runtime.
        std::vector<std::size_t> rows;
        for (std::size_t i = static_cast<std::size_t>(trial) % 3; i < s.test.size(); i += 3) {
            rows.push_back(i);
        }
        const Dataset data = subset(s.test, rows, Split::Test);
        std::vector<DenseTensor> base;
        for (std::size_t i = 0; i < data.size(); ++i) {
            base.push_back(forward(m, data.sample(i)));
        }
        const auto before = weight_bytes(m);
        const auto inj = random_fault_set(m, g);
        try {
            InjectionHandler h(m, inj);
            ++armed;
            try {
                h.run(data);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::RangeExceeded) {
                    throw;
                }
                ++run_errors;
            }
            h.restore();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ConflictingStuckAt) {
                throw;
            }
            ++setup_errors;
        }
        bool ok = weight_bytes(m) == before && !m.armed();
        for (std::size_t i = 0; ok && i < data.size(); ++i) {
            ok = forward(m, data.sample(i)).bit_equal(base[i]);
        }
        mismatches += ok ? 0 : 1;
    }
    return {mismatches == 0,
            fmt("fault_sets=100 armed=%zu quantize_range_errors=%zu conflicting_setups=%zu mismatches=%zu", armed,
                run_errors, setup_errors, mismatches)};
}

// ---------------------------------------------------------------- OV-1

struct BenchStats {
    double overhead = 0.0;
    double ratio = 0.0;
    std::string table;
};

BenchStats bench(const Model& model, const Dataset& data) {
    BenchConfig cfg;
    cfg.fault_counts = {1, 10, 100, 1000, 10000, 100000};
    cfg.repetitions = 5;
    BenchStats out;
    double t10 = 0.0, t1e5 = 0.0;
    for (const BenchRow& r : run_overhead_bench(model, data, cfg)) {
        out.table += fmt(" %zu:%.4fs", r.k, r.t_median_s);
        if (r.k == 10) {
            t10 = r.t_median_s;
        }
        if (r.k == 100000) {
            t1e5 = r.t_median_s;
            out.overhead = r.overhead;
        }
    }
    out.ratio = t1e5 / t10;
    return out;
}

// Timed over the scenario's full blob pool (train and test, 1000 inputs); the
// 200-input test split is reported alongside for reference.
Verdict ov1(const zoo::Scenario& mlp) {
    const auto t0 = Clock::now();
    const zoo::BlobsSpec b;
    const Dataset pool = zoo::make_blobs(b.n, b.d, b.classes, b.spread, b.seed);
    const BenchStats full = bench(mlp.model, pool);
    const BenchStats small = bench(mlp.model, mlp.test);
    const double s = since(t0);
    return {full.overhead <= 1.0 && full.ratio <= 2.0 && s < 300.0,
            fmt("params=%zu inputs=%zu overhead(1e5)=%.3f (<=1.0) t(1e5)/t(10)=%.3f (<=2.0) k:t_median",
                mlp.model.parameter_count(), pool.size(), full.overhead, full.ratio) +
                full.table +
                fmt("; test split (%zu inputs): overhead(1e5)=%.3f t(1e5)/t(10)=%.3f", mlp.test.size(),
                    small.overhead, small.ratio)};
}

// ---------------------------------------------------------------- GR-1

Verdict gr1() {
    std::vector<double> expect;
    for (int e = 7; e >= 1; --e) {
        for (int m = 1; m <= 9; ++m) {
            expect.push_back(std::strtod(fmt("%de-%d", m, e).c_str(), nullptr));
        }
    }
    expect.push_back(1.0);
    const auto got = rate_grid();
    std::size_t diff = got.size() == expect.size() ? 0 : 1;
    for (std::size_t i = 0; i < std::min(got.size(), expect.size()); ++i) {
        diff += std::memcmp(&got[i], &expect[i], sizeof(double)) != 0;
    }
    return {diff == 0, fmt("size=%zu first=%g last=%g differing=%zu", got.size(), got.front(), got.back(), diff)};
}

// ---------------------------------------------------------------- CLI pipeline (AC-1, ST-1, DT-1)

struct Pipeline {
    bool ok = false;
    fs::path model_dir;
    fs::path train_store;
    std::string train_id;
    json dataset;
};

const Pipeline& trained_mlp() {
    static const Pipeline p = [] {
        Pipeline out;
        out.dataset = json{{"zoo", "blobs"}};
        const fs::path dir = workdir() / "train";
        const fs::path cfg = write_config("train.json", json{{"model", {{"zoo", "mlp"}}}, {"dataset", out.dataset}});
        json summary;
        out.ok = cli({"train", "--config", cfg.string(), "--out", dir.string()}, &summary) == 0;
        if (out.ok) {
            out.model_dir = summary["model_path"].get<std::string>();
            out.train_store = dir / "results.db";
            out.train_id = summary["experiment_id"];
        }
        return out;
    }();
    return p;
}

Verdict ac1() {
    const Pipeline& p = trained_mlp();
    if (!p.ok) {
        return {false, "train failed"};
    }
    double baseline = 0.0;
    {
        const ResultStore s(p.train_store, ResultStore::Mode::ReadOnly);
        const auto m = s.metrics(p.train_id);
        if (m.size() != 1 || !m[0].second.accuracy) {
            return {false, "no stored baseline"};
        }
        baseline = *m[0].second.accuracy;
    }
    const fs::path dir = workdir() / "control";
    const fs::path cfg =
        write_config("control.json", json{{"model", {{"path", p.model_dir.string()}}},
                                          {"dataset", p.dataset},
                                          {"sweep", {{"rates", {1e-3}}, {"include_control", true}}}});
    json summary;
    if (cli({"sweep", "--config", cfg.string(), "--out", dir.string()}, &summary) != 0) {
        return {false, "sweep failed"};
    }
    const ResultStore s(dir / "results.db", ResultStore::Mode::ReadOnly);
    std::size_t control = 0, equal = 0;
    for (const auto& [id, m] : s.metrics(summary["experiment_id"])) {
        if (m.rate != 0.0) {
            continue;
        }
        ++control;
        equal += m.accuracy && std::memcmp(&*m.accuracy, &baseline, sizeof(double)) == 0 && m.fault_count == 0;
    }
    return {control > 0 && equal == control,
            fmt("baseline=%.17g control_cells=%zu bitwise_equal=%zu", baseline, control, equal)};
}

// Weight sweep over the full grid with a monitor in every cell.
Verdict st1() {
    const Pipeline& p = trained_mlp();
    if (!p.ok) {
        return {false, "train failed"};
    }
    const fs::path dir = workdir() / "trace";
    const json doc{{"model", {{"path", p.model_dir.string()}}},
                   {"dataset", p.dataset},
                   {"sweep",
                    {{"seeds", {1}},
                     {"monitors", {{{"layer", "fc3"}, {"capture", "summary"}}}},
                     {"include_control", true}}}};
    json summary;
    if (cli({"sweep", "--config", write_config("trace.json", doc).string(), "--out", dir.string()}, &summary) != 0) {
        return {false, "sweep failed"};
    }
    const std::string id = summary["experiment_id"];
    const ResultStore s(dir / "results.db", ResultStore::Mode::ReadOnly);
    const Model model = [&] {
        // Reload to get tensor sizes for n_params.
        zoo::ScenarioSpec spec;
        return zoo::build_scenario(spec).model;
    }();
    std::size_t rows = 0, bad_trace = 0, inputs = 0;
    for (const auto& [eid, m] : s.metrics(id)) {
        ++rows;
        const std::size_t n = target_param_count(model, model.index_of(m.layer), TargetType::Weight, SiteType::DenseFloat);
        const auto expect = static_cast<std::size_t>(std::llround(m.rate * static_cast<double>(n)));
        const std::size_t got = s.fault_trace_count(id, CellKey{m.rate, m.layer, m.seed});
        bad_trace += got != expect || m.fault_count != expect;
    }
    inputs = 200; // test split of the default blobs
    const std::size_t monitors = s.monitors(id).size();
    const std::size_t expect_monitors = rows * inputs * 1;
    return {rows == 65 * 3 && bad_trace == 0 && monitors == expect_monitors,
            fmt("metric_rows=%zu trace_mismatches=%zu monitor_records=%zu expected=%zu", rows, bad_trace, monitors,
                expect_monitors)};
}

Verdict dt1() {
    const Pipeline& p = trained_mlp();
    if (!p.ok) {
        return {false, "train failed"};
    }
    const json doc{{"seed", 3}, {"model", {{"path", p.model_dir.string()}}}, {"dataset", p.dataset}, {"sweep", json::object()}};
    const fs::path cfg = write_config("det.json", doc);
    json a, b;
    if (cli({"sweep", "--config", cfg.string(), "--out", (workdir() / "det_a").string()}, &a) != 0 ||
        cli({"sweep", "--config", cfg.string(), "--out", (workdir() / "det_b").string()}, &b) != 0) {
        return {false, "sweep failed"};
    }
    std::size_t differing = 0;
    std::size_t bytes = 0;
    for (const char* f : {"metrics.csv", "accuracy_vs_rate.csv"}) {
        const auto x = file_bytes(workdir() / "det_a" / f);
        const auto y = file_bytes(workdir() / "det_b" / f);
        differing += x != y;
        bytes += x.size();
    }
    // Re-export through report as a second path to the same tables.
    for (const char* sub : {"det_a", "det_b"}) {
        if (cli({"report", "--out", (workdir() / sub / "report").string(), "--store",
                 (workdir() / sub / "results.db").string()}) != 0) {
            return {false, "report failed"};
        }
    }
    for (const char* f : {"metrics.csv", "accuracy_vs_rate.csv", "overhead.csv"}) {
        differing += file_bytes(workdir() / "det_a" / "report" / f) != file_bytes(workdir() / "det_b" / "report" / f);
    }
    return {differing == 0 && a["cells"] == 576,
            fmt("cells=%d csv_bytes=%zu differing_files=%zu", a["cells"].get<int>(), bytes, differing)};
}

// ---------------------------------------------------------------- AC-2

Verdict ac2(const zoo::Scenario& mlp) {
    const auto t0 = Clock::now();
    SweepConfig cfg;
    cfg.rates = {1.0};
    cfg.seeds = {1, 2, 3};
    cfg.bit_lo = 31;
    cfg.bit_hi = 31;
    const CampaignResult r = run_sweep(cfg, mlp.model, mlp.test);
    const double bound = 1.0 / static_cast<double>(mlp.test.n_classes) + 0.10;
    double worst = 0.0;
    std::string per_layer;
    for (const std::string& layer : mlp.model.injectable_layers(TargetType::Weight)) {
        double sum = 0.0;
        int n = 0;
        for (const MetricRow& c : r.cells) {
            if (c.layer == layer && c.accuracy) {
                sum += *c.accuracy;
                ++n;
            }
        }
        const double mean = n == 3 ? sum / 3.0 : 1.0;
        worst = std::max(worst, mean);
        per_layer += fmt(" %s=%.3f", layer.c_str(), mean);
    }
    const double s = since(t0);
    return {mlp.baseline_accuracy >= 0.90 && worst <= bound && r.failed_cells == 0 && s < 120.0,
            fmt("baseline=%.3f bound=%.3f seed-mean per layer:", mlp.baseline_accuracy, bound) + per_layer};
}

// ---------------------------------------------------------------- AC-3

Verdict ac3(const zoo::Scenario& snn) {
    std::string detail = fmt("baseline=%.3f", snn.baseline_accuracy);
    bool pass = true;
    for (SiteType site : {SiteType::SparseIndex, SiteType::DenseFloat}) {
        SweepConfig cfg;
        cfg.target = TargetType::Output;
        cfg.site = site;
        cfg.seeds = {1, 2, 3};
        cfg.record_trace = false;
        const CampaignResult r = run_sweep(cfg, snn.model, snn.test);
        std::vector<double> rates, mins;
        for (const RateSummary& s : r.per_rate) {
            rates.push_back(s.rate);
            mins.push_back(s.min_accuracy);
        }
        const double rho = spearman(rates, mins);
        const bool ok = r.failed_cells == 0 && r.per_rate.size() == 64 && rho <= 0.0;
        pass = pass && ok;
        detail += fmt(" %s: cells=%zu failed=%zu spearman=%.3f min_acc@1e-7=%.3f min_acc@1=%.3f;",
                      std::string(to_string(site)).c_str(), r.cells.size(), r.failed_cells, rho, mins.front(),
                      mins.back());
    }
    return {pass, detail};
}

} // namespace

int main() {
    std::printf("bitfault acceptance suite\n");
    report("QZ-1", qz1);
    report("MK-1", mk1);
    report("GR-1", gr1);

    zoo::Scenario mlp = zoo::build_scenario({});
    zoo::ScenarioSpec snn_spec;
    snn_spec.model_id = "snn";
    zoo::Scenario snn = zoo::build_scenario(snn_spec);

    report("RS-1", [&] { return rs1(mlp, snn); });
    report("OV-1", [&] { return ov1(mlp); });
    report("AC-1", ac1);
    report("AC-2", [&] { return ac2(mlp); });
    report("AC-3", [&] { return ac3(snn); });
    report("ST-1", st1);
    report("DT-1", dt1);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
