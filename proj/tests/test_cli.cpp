#include "bitfault/cli.hpp"
#include "bitfault/serialize.hpp"
#include "bitfault/store.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bitfault;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
    json summary() const { return json::parse(out); }
};

Outcome cli(std::vector<std::string> args) {
    args.insert(args.begin(), "bitfault");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("bitfault_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
    const fs::path p = dir / name;
    std::ofstream(p) << doc.dump(2);
    return p;
}

// A small MLP keeps each command well under a second.
json small_model() { return json{{"zoo", "mlp"}, {"hidden", {32}}}; }
json small_blobs() { return json{{"zoo", "blobs"}, {"n", 200}, {"d", 16}, {"classes", 4}}; }

std::string slurp(const fs::path& p) {
    const auto bytes = read_file(p);
    return std::string(bytes.begin(), bytes.end());
}

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (std::size_t p = s.find("\r\n"); p != std::string::npos; p = s.find("\r\n", p + 2)) {
        ++n;
    }
    return n;
}

} // namespace

TEST(Cli, TrainTwiceIsByteIdentical) {
    const fs::path dir = fresh("train");
    const json doc{{"seed", 7}, {"model", small_model()}, {"dataset", small_blobs()}};
    const fs::path cfg = write_config(dir, "c.json", doc);
    const Outcome a = cli({"train", "--config", cfg.string(), "--out", (dir / "a").string()});
    const Outcome b = cli({"train", "--config", cfg.string(), "--out", (dir / "b").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(a.summary()["baseline_accuracy"], b.summary()["baseline_accuracy"]);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "model")) {
        EXPECT_EQ(read_file(e.path()), read_file(dir / "b" / "model" / e.path().filename()));
        ++files;
    }
    EXPECT_GE(files, 5u);
    ResultStore s(dir / "a" / "results.db");
    const auto m = s.metrics();
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(*m[0].second.accuracy, a.summary()["baseline_accuracy"].get<double>());
}

TEST(Cli, DefaultMlpBaselineAtLeastNinety) {
    const fs::path dir = fresh("baseline");
    const fs::path cfg = write_config(dir, "c.json", json{{"model", {{"zoo", "mlp"}}}, {"dataset", {{"zoo", "blobs"}}}});
    const Outcome o = cli({"train", "--config", cfg.string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_GE(o.summary()["baseline_accuracy"].get<double>(), 0.90);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = fresh("exit");
    const fs::path no_data = write_config(dir, "a.json", json{{"model", small_model()}});
    Outcome o = cli({"train", "--config", no_data.string(), "--out", dir.string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("$.dataset"), std::string::npos) << o.err;

    const fs::path unknown = write_config(dir, "b.json", json{{"model", {{"zoo", "mlp"}, {"foo", 1}}}});
    o = cli({"train", "--config", unknown.string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("$.model.foo"), std::string::npos);

    EXPECT_EQ(cli({"frobnicate"}).code, 2);
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"train", "--config", (dir / "missing.json").string()}).code, 2);

    // Runtime failure: a model path that does not exist.
    const fs::path bad_model = write_config(
        dir, "c.json", json{{"model", {{"path", (dir / "nowhere").string()}}}, {"dataset", small_blobs()}});
    o = cli({"inject", "--config", bad_model.string(), "--out", dir.string()});
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.err.find("IoError"), std::string::npos);

    // Unknown layer in a literal injection is a runtime error too.
    const fs::path bad_layer = write_config(
        dir, "d.json",
        json{{"model", small_model()},
             {"dataset", small_blobs()},
             {"injections", {{{"fault", {{"layer", "nope"}, {"target", "output"}, {"elements", {{0}}}, {"bits", {{0}}}}}}}}});
    EXPECT_EQ(cli({"inject", "--config", bad_layer.string(), "--out", dir.string()}).code, 1);
}

TEST(Cli, InjectExamples) {
    const fs::path dir = fresh("inject");
    const json base{{"model", small_model()}, {"dataset", small_blobs()}};
    const Outcome t = cli({"train", "--config", write_config(dir, "t.json", base).string(), "--out", dir.string()});
    ASSERT_EQ(t.code, 0) << t.err;
    const double baseline = t.summary()["baseline_accuracy"];
    const std::string model_path = (dir / "model").string();

    json empty{{"model", {{"path", model_path}}}, {"dataset", small_blobs()}, {"injections", json::array()}};
    Outcome o = cli({"inject", "--config", write_config(dir, "e.json", empty).string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.summary()["accuracy"].get<double>(), baseline);
    EXPECT_EQ(o.summary()["fault_count"], 0);

    json one = empty;
    one["injections"] = {{{"fault",
                           {{"layer", "fc1"}, {"target", "weight"}, {"elements", {{0, 0}}}, {"bits", {{31}}}}}},
                         {{"monitor", {{"layer", "fc2"}, {"capture", "full"}}}}};
    o = cli({"inject", "--config", write_config(dir, "o.json", one).string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.summary()["fault_count"], 1);
    EXPECT_EQ(o.summary()["monitor_records"], 40);
    const std::string id = o.summary()["experiment_id"];
    ResultStore s(dir / "results.db");
    const auto rows = s.metrics(id);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(s.fault_trace_count(id, CellKey{rows[0].second.rate, rows[0].second.layer, rows[0].second.seed}), 1u);
    EXPECT_EQ(rows[0].second.layer, "fc1");
    EXPECT_EQ(rows[0].second.rate, 1.0 / (16.0 * 32.0));
    EXPECT_EQ(s.monitors(id).size(), 40u);

    // Quantized bit 24 on an output element adds exactly 1.0 to it.
    json q = empty;
    q["injections"] = {{{"fault",
                         {{"layer", "fc2"},
                          {"target", "output"},
                          {"site", "quantized"},
                          {"elements", {{0}}},
                          {"bits", {{24}}}}}},
                       {{"monitor", {{"layer", "fc2"}, {"capture", "full"}}}}};
    o = cli({"inject", "--config", write_config(dir, "q.json", q).string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const std::string qid = o.summary()["experiment_id"];
    const std::string mid = s.metrics(id).at(0).first;
    const auto faulted = s.monitors(qid);
    const auto clean_one = s.monitors(id); // fc1 weight fault changes fc2, so rerun clean below
    json clean = empty;
    clean["injections"] = {{{"monitor", {{"layer", "fc2"}, {"capture", "full"}}}}};
    o = cli({"inject", "--config", write_config(dir, "c.json", clean).string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto plain = s.monitors(o.summary()["experiment_id"]);
    ASSERT_EQ(faulted.size(), plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
        const float x = plain[i].tensor[0];
        // Scalar oracle: code = rne(x * 2^24); code ^ 2^24; back to float.
        const auto code = static_cast<std::int32_t>(std::nearbyint(static_cast<double>(x) * 16777216.0));
        const float expect = static_cast<float>(static_cast<double>(code ^ (1 << 24)) / 16777216.0);
        EXPECT_EQ(faulted[i].tensor[0], expect) << i;
        EXPECT_NEAR(std::fabs(faulted[i].tensor[0] - x), 1.0f, 1e-6f);
        for (std::size_t j = 1; j < plain[i].tensor.size(); ++j) {
            EXPECT_EQ(faulted[i].tensor[j], dequantize_scalar(quantize_scalar(plain[i].tensor[j])));
        }
    }
    (void)mid;
    (void)clean_one;
}

TEST(Cli, ReportOnEmptyStoreWritesHeaders) {
    const fs::path dir = fresh("report_empty");
    const Outcome o = cli({"report", "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(slurp(dir / "metrics.csv"), "experiment_id,rate,layer,seed,accuracy,fault_count,error\r\n");
    EXPECT_EQ(line_count(slurp(dir / "accuracy_vs_rate.csv")), 1u);
    EXPECT_EQ(line_count(slurp(dir / "overhead.csv")), 1u);
    EXPECT_FALSE(fs::exists(dir / "results.db"));
}

TEST(Cli, SweepThenReport) {
    const fs::path dir = fresh("sweep");
    const json doc{{"model", small_model()},
                   {"dataset", small_blobs()},
                   {"sweep", {{"layers", {"fc2"}}, {"seeds", {1}}, {"include_control", true}}}};
    const fs::path cfg = write_config(dir, "s.json", doc);
    const Outcome o = cli({"sweep", "--config", cfg.string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.summary()["cells"], 65);
    EXPECT_EQ(o.summary()["failed_cells"], 0);
    EXPECT_EQ(line_count(slurp(dir / "accuracy_vs_rate.csv")), 1u + 65u);
    EXPECT_EQ(line_count(slurp(dir / "metrics.csv")), 1u + 65u);

    const auto before = read_file(dir / "results.db");
    const Outcome r = cli({"report", "--out", (dir / "rep").string(), "--store", (dir / "results.db").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.summary()["rate_rows"], 65);
    EXPECT_EQ(slurp(dir / "rep" / "metrics.csv"), slurp(dir / "metrics.csv"));
    EXPECT_EQ(read_file(dir / "results.db"), before);
    ResultStore s(dir / "results.db");
    EXPECT_EQ(s.row_count("metrics"), 65u);
}

TEST(Cli, SweepSeedFlagDeterminesEverything) {
    const fs::path dir = fresh("seed");
    const json doc{{"model", small_model()},
                   {"dataset", small_blobs()},
                   {"sweep", {{"rates", {0.01, 0.1}}, {"kind", "bit_flip"}}}};
    const fs::path cfg = write_config(dir, "s.json", doc);
    for (const char* sub : {"a", "b"}) {
        ASSERT_EQ(cli({"sweep", "--config", cfg.string(), "--seed", "5", "--out", (dir / sub).string()}).code, 0);
    }
    ASSERT_EQ(cli({"sweep", "--config", cfg.string(), "--seed", "6", "--out", (dir / "c").string()}).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
    EXPECT_NE(slurp(dir / "a" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
}

TEST(Cli, BenchZeroRow) {
    const fs::path dir = fresh("bench");
    const json doc{{"model", small_model()},
                   {"dataset", small_blobs()},
                   {"bench", {{"fault_counts", {1, 10}}, {"repetitions", 3}}}};
    const Outcome o = cli({"bench", "--config", write_config(dir, "b.json", doc).string(), "--out", dir.string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const std::string csv = slurp(dir / "overhead.csv");
    EXPECT_EQ(csv.rfind("k,t_median_s,overhead\r\n0,", 0), 0u);
    const std::size_t line_end = csv.find("\r\n", 23);
    const std::string row0 = csv.substr(23, line_end - 23);
    EXPECT_EQ(row0.substr(row0.rfind(',') + 1), "0");
    EXPECT_EQ(line_count(csv), 4u);
    EXPECT_EQ(o.summary()["rows"][0]["overhead"], 0.0);
}

TEST(Cli, VersionAndHelp) {
    EXPECT_EQ(cli({"--version"}).code, 0);
    EXPECT_EQ(cli({"--help"}).code, 0);
}
