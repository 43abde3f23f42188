#pragma once

#include "bitfault/campaign.hpp"
#include "bitfault/fault.hpp"
#include "bitfault/zoo.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bitfault {

struct DatasetSection {
    std::string zoo; // blobs | events
    zoo::BlobsSpec blobs;
    zoo::EventsSpec events;
    double test_fraction = 0.2;
};

struct ModelSection {
    std::optional<std::filesystem::path> path; // a saved model directory
    std::string zoo;                           // mlp | cnn | snn when no path
    std::vector<std::size_t> hidden = {384, 192};
    std::size_t cnn_channels = 4;
    std::uint64_t model_seed = 1;
    std::optional<TrainOptions> train;
};

/// Command-line values that override the file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> store;
    std::optional<std::filesystem::path> out;
    std::optional<std::size_t> workers;
};

/// Validated configuration. Every seed the file leaves out defaults to the
/// global seed (sweep seeds: seed, seed+1, seed+2).
struct RunConfig {
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> store;
    std::filesystem::path out = "out";
    std::size_t workers = 1;
    std::optional<ModelSection> model;
    std::optional<DatasetSection> dataset;
    std::vector<Injection> injections;
    std::optional<SweepConfig> sweep;
    std::optional<BenchConfig> bench;
};

/// Strict validation: unknown keys, wrong types and bad values throw
/// ConfigError whose message starts with the JSON path ("$.sweep.kind: ...").
RunConfig parse_config(const nlohmann::json& doc, const Overrides& overrides = {});

/// Reads and parses a config file; I/O and syntax problems are ConfigError too.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Scenario spec for a zoo model on a zoo dataset; ConfigError when the pair
/// does not fit (snn needs events, mlp and cnn need blobs).
zoo::ScenarioSpec scenario_spec(const ModelSection& m, const DatasetSection& d);

/// FNV-1a 64 of the canonical (key-sorted, compact) dump, as 16 hex digits.
/// Stable under key reordering.
std::string config_hash(const nlohmann::json& j);

} // namespace bitfault
