#include "bitfault/cli.hpp"

#include "bitfault/campaign.hpp"
#include "bitfault/config.hpp"
#include "bitfault/error.hpp"
#include "bitfault/injector.hpp"
#include "bitfault/model_io.hpp"
#include "bitfault/store.hpp"
#include "bitfault/zoo.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <set>

#ifndef BITFAULT_VERSION
#define BITFAULT_VERSION "0.1.0"
#endif

namespace bitfault {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Context {
    RunConfig cfg;
    json doc; // config document with overrides applied
    bool verbose = false;
    std::ostream* err = nullptr;

    fs::path store_path() const { return cfg.store ? *cfg.store : cfg.out / "results.db"; }
    void log(const std::string& msg) const {
        if (verbose) {
            *err << msg << '\n';
        }
    }
};

struct Loaded {
    Model model;
    Dataset train;
    Dataset test;
    double baseline = 0.0;
    std::string model_id;
    std::string dataset_id;
};

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, path + ": " + msg);
}

Loaded load(const Context& ctx, const char* command) {
    if (!ctx.cfg.model) {
        config_error("$.model", std::string("required for ") + command);
    }
    if (!ctx.cfg.dataset) {
        config_error("$.dataset", std::string("required for ") + command);
    }
    const ModelSection& m = *ctx.cfg.model;
    const DatasetSection& d = *ctx.cfg.dataset;
    Loaded out;
    out.dataset_id = d.zoo;
    if (!m.path) {
        ctx.log("training zoo model '" + m.zoo + "'");
        zoo::Scenario s = zoo::build_scenario(scenario_spec(m, d));
        out.model = std::move(s.model);
        out.train = std::move(s.train);
        out.test = std::move(s.test);
        out.baseline = s.baseline_accuracy;
        out.model_id = m.zoo;
        return out;
    }
    LoadedModel lm = load_model(*m.path);
    out.model = std::move(lm.model);
    out.model_id = lm.meta.value("model_id", std::string("file"));
    Dataset all = d.zoo == "blobs"
                      ? zoo::make_blobs(d.blobs.n, d.blobs.d, d.blobs.classes, d.blobs.spread, d.blobs.seed)
                      : zoo::make_events(d.events.n, d.events.time_steps, d.events.d, d.events.classes,
                                         std::vector<double>(d.events.classes, d.events.rate), d.events.seed,
                                         d.events.noise_rate);
    auto [train, test] = train_test_split(all, d.test_fraction);
    const Shape sample = out.model.forward_input_shape();
    out.train = zoo::reshape_samples(train, sample);
    out.test = zoo::reshape_samples(test, sample);
    out.baseline = evaluate(out.model, out.test).accuracy;
    return out;
}

std::string begin_experiment(ResultStore& store, const Context& ctx, const std::string& kind, const Loaded& l) {
    const std::string hash = config_hash(ctx.doc);
    std::string id = kind + "-" + hash;
    for (int n = 2; store.experiment(id); ++n) {
        id = kind + "-" + hash + "-" + std::to_string(n);
    }
    store.record_experiment(ExperimentRecord{id, kind, hash, l.model_id, l.dataset_id, utc_timestamp(),
                                             BITFAULT_VERSION, ctx.doc.dump(), {}});
    return id;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    }
}

json cmd_train(const Context& ctx) {
    if (ctx.cfg.model && ctx.cfg.model->path) {
        config_error("$.model.zoo", "train needs a zoo model spec, not a path");
    }
    Loaded l = load(ctx, "train");
    ensure_dir(ctx.cfg.out);
    const fs::path model_dir = ctx.cfg.out / "model";
    save_model(l.model, model_dir,
               json{{"model_id", l.model_id}, {"dataset_id", l.dataset_id}, {"baseline_accuracy", l.baseline}});
    ResultStore store(ctx.store_path());
    const std::string id = begin_experiment(store, ctx, "train", l);
    MetricRow m;
    m.layer = "*";
    m.seed = ctx.cfg.seed;
    m.accuracy = l.baseline;
    store.record_metric(id, m);
    store.finish_experiment(id, utc_timestamp());
    return json{{"command", "train"},
                {"experiment_id", id},
                {"model_path", model_dir.string()},
                {"model_id", l.model_id},
                {"parameters", l.model.parameter_count()},
                {"baseline_accuracy", l.baseline}};
}

json cmd_inject(const Context& ctx) {
    Loaded l = load(ctx, "inject");
    ensure_dir(ctx.cfg.out);
    RunResult r;
    {
        InjectionHandler handler(l.model, ctx.cfg.injections);
        r = handler.run(l.test);
        handler.restore();
    }

    // The cell key of a literal injection list: its layer (or "*") and the
    // faulted-element density over the tensors it touches.
    std::set<std::tuple<std::size_t, TargetType, SiteType>> tensors;
    std::set<std::string> layers;
    std::size_t elements = 0;
    for (const Injection& inj : ctx.cfg.injections) {
        if (const auto* f = std::get_if<Fault>(&inj)) {
            tensors.emplace(l.model.index_of(f->layer_name), f->target, f->site);
            layers.insert(f->layer_name);
            elements += f->element_indices.size();
        }
    }
    std::size_t n_params = 0;
    for (const auto& [layer, target, site] : tensors) {
        n_params += target_param_count(l.model, layer, target, site);
    }
    CellOutcome cell;
    cell.metric.rate = n_params == 0 ? 0.0 : static_cast<double>(elements) / static_cast<double>(n_params);
    cell.metric.layer = layers.size() == 1 ? *layers.begin() : "*";
    cell.metric.seed = ctx.cfg.seed;
    cell.metric.accuracy = r.metrics.accuracy;
    cell.metric.fault_count = r.trace->size();
    cell.trace = *r.trace;
    cell.monitors = std::move(r.monitors);

    ResultStore store(ctx.store_path());
    const std::string id = begin_experiment(store, ctx, "inject", l);
    store.record_cell(id, cell);
    store.finish_experiment(id, utc_timestamp());
    return json{{"command", "inject"},
                {"experiment_id", id},
                {"accuracy", r.metrics.accuracy},
                {"baseline_accuracy", l.baseline},
                {"fault_count", cell.metric.fault_count},
                {"monitor_records", cell.monitors.size()},
                {"nan_outputs", r.metrics.nan_outputs}};
}

json cmd_sweep(const Context& ctx) {
    if (!ctx.cfg.sweep) {
        config_error("$.sweep", "required for sweep");
    }
    Loaded l = load(ctx, "sweep");
    ensure_dir(ctx.cfg.out);
    SweepConfig sc = *ctx.cfg.sweep;
    sc.model_id = l.model_id;
    sc.dataset_id = l.dataset_id;

    ResultStore store(ctx.store_path());
    const std::string id = begin_experiment(store, ctx, "sweep", l);
    std::size_t done = 0;
    const CampaignResult res = run_sweep(sc, l.model, l.test, [&](const CellOutcome& c) {
        store.record_cell(id, c);
        ++done;
        if (!c.metric.error.empty()) {
            ctx.log("cell rate=" + format_double(c.metric.rate) + " layer=" + c.metric.layer + " failed: " +
                    c.metric.error);
        } else if (done % 50 == 0) {
            ctx.log(std::to_string(done) + " cells done");
        }
    });
    for (const RateSummary& s : res.per_rate) {
        store.record_rate_summary(id, s);
    }
    store.finish_experiment(id, utc_timestamp());
    CsvOptions opts;
    opts.experiment_id = id;
    export_csv(store, ctx.cfg.out / "metrics.csv", opts);
    write_text(ctx.cfg.out / "accuracy_vs_rate.csv", accuracy_vs_rate_csv(store, id));
    return json{{"command", "sweep"},
                {"experiment_id", id},
                {"baseline_accuracy", l.baseline},
                {"cells", res.cells.size()},
                {"failed_cells", res.failed_cells},
                {"rates", res.per_rate.size()}};
}

json cmd_bench(const Context& ctx) {
    if (!ctx.cfg.bench) {
        config_error("$.bench", "required for bench");
    }
    Loaded l = load(ctx, "bench");
    ensure_dir(ctx.cfg.out);
    const std::vector<BenchRow> rows = run_overhead_bench(l.model, l.test, *ctx.cfg.bench);
    ResultStore store(ctx.store_path());
    const std::string id = begin_experiment(store, ctx, "bench", l);
    std::string csv = "k,t_median_s,overhead\r\n";
    json table = json::array();
    for (const BenchRow& b : rows) {
        store.record_bench(id, b);
        csv += std::to_string(b.k) + ',' + format_double(b.t_median_s) + ',' + format_double(b.overhead) + "\r\n";
        table.push_back(json{{"k", b.k}, {"t_median_s", b.t_median_s}, {"overhead", b.overhead}});
    }
    store.finish_experiment(id, utc_timestamp());
    write_text(ctx.cfg.out / "overhead.csv", csv);
    return json{{"command", "bench"}, {"experiment_id", id}, {"rows", std::move(table)}};
}

std::size_t data_rows(const std::string& csv) {
    std::size_t n = 0;
    for (std::size_t p = csv.find("\r\n"); p != std::string::npos; p = csv.find("\r\n", p + 2)) {
        ++n;
    }
    return n - 1; // header
}

json cmd_report(const Context& ctx) {
    ensure_dir(ctx.cfg.out);
    const fs::path path = ctx.store_path();
    std::string metrics, rates, overhead;
    std::error_code ec;
    if (!fs::exists(path) || fs::file_size(path, ec) == 0) {
        ctx.log("no store at " + path.string() + "; writing empty tables");
        metrics = "experiment_id,rate,layer,seed,accuracy,fault_count,error\r\n";
        rates = "experiment_id,rate,min_accuracy,min_layer\r\n";
        overhead = "experiment_id,k,t_median_s,overhead\r\n";
    } else {
        const ResultStore store(path, ResultStore::Mode::ReadOnly);
        metrics = metrics_csv(store);
        rates = accuracy_vs_rate_csv(store);
        overhead = overhead_csv(store);
    }
    write_text(ctx.cfg.out / "metrics.csv", metrics);
    write_text(ctx.cfg.out / "accuracy_vs_rate.csv", rates);
    write_text(ctx.cfg.out / "overhead.csv", overhead);
    return json{{"command", "report"},
                {"out", ctx.cfg.out.string()},
                {"metric_rows", data_rows(metrics)},
                {"rate_rows", data_rows(rates)},
                {"bench_rows", data_rows(overhead)}};
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bit-level fault injection for neural-network inference", "bitfault"};
    app.set_version_flag("--version", BITFAULT_VERSION);
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> store_path;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> workers;
    bool verbose = false;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "global seed; default for every seed the config leaves out");
    app.add_option("--store", store_path, "result database (default: <out>/results.db)");
    app.add_option("--out", out_dir, "output directory (default: out)");
    app.add_option("--workers", workers, "sweep worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--verbose", verbose, "progress on stderr");

    const std::map<std::string, std::string> commands = {
        {"train", "train a zoo model and save it under <out>/model"},
        {"inject", "one arm/run/restore cycle with the config's injection list"},
        {"sweep", "fault-rate sweep over layers and seeds"},
        {"bench", "overhead versus fault count"},
        {"report", "CSV tables from the store (read-only)"},
    };
    for (const auto& [name, help] : commands) {
        app.add_subcommand(name, help)->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    Context ctx;
    ctx.verbose = verbose;
    ctx.err = &err;
    try {
        Overrides ov;
        ov.seed = seed;
        if (store_path) {
            ov.store = *store_path;
        }
        if (out_dir) {
            ov.out = *out_dir;
        }
        ov.workers = workers;
        json doc = config_path.empty() ? json::object() : read_config_file(config_path);
        ctx.cfg = parse_config(doc, ov);
        // Run-invariant view for hashing: where results go and how many
        // threads compute them does not change them.
        doc["seed"] = ctx.cfg.seed;
        doc.erase("store");
        doc.erase("out");
        doc.erase("workers");
        ctx.doc = std::move(doc);
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 2;
    }

    try {
        json summary;
        if (command == "train") {
            summary = cmd_train(ctx);
        } else if (command == "inject") {
            summary = cmd_inject(ctx);
        } else if (command == "sweep") {
            summary = cmd_sweep(ctx);
        } else if (command == "bench") {
            summary = cmd_bench(ctx);
        } else {
            summary = cmd_report(ctx);
        }
        out << summary.dump() << '\n';
        return 0;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return e.code() == ErrorCode::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace bitfault
