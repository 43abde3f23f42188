#pragma once

#include "bitfault/dataset.hpp"
#include "bitfault/nn.hpp"
#include "bitfault/train.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bitfault::zoo {

/// C Gaussian clusters around unit-norm centers; sample i has label i % C.
/// Features shape [n, d]. Throws InvalidArgument for C < 2, n < C or spread < 0.
Dataset make_blobs(std::size_t n, std::size_t d, std::size_t classes, double spread, std::uint64_t seed);

/// Binary event streams [n, T, d]. Class c owns the feature block
/// [c*d/C, (c+1)*d/C), firing there with probability rate_per_class[c] at
/// every step; all other features fire with probability noise_rate.
Dataset make_events(std::size_t n, std::size_t time_steps, std::size_t d, std::size_t classes,
                    const std::vector<double>& rate_per_class, std::uint64_t seed, double noise_rate = 0.02);

/// Same samples, new per-sample shape of equal element count.
Dataset reshape_samples(const Dataset& d, const Shape& sample_shape);

/// fc1, relu1, fc2, relu2, ..., fcN. He-uniform weights, zero bias.
Model make_mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes, std::uint64_t seed);

/// conv1 (3x3, pad 1), relu1, pool1 (2x2), fc over [C, H, W] input.
Model make_cnn(const Shape& input_shape, std::size_t channels, std::size_t classes, std::uint64_t seed);

struct SnnParams {
    std::size_t channels = 4;
    float hidden_decay = 0.5f;
    float hidden_threshold = 1.0f;
    float output_decay = 0.9f;
    float output_threshold = 1.0f;
};

/// conv1, lif1, conv2 (stride 2), lif2, fc, lif_out over [1, H, W] frames.
/// Convolutions keep their fixed random weights; only fc is trained.
Model make_snn(const Shape& frame_shape, std::size_t time_steps, std::size_t classes, std::uint64_t seed,
               const SnnParams& params = {});

/// Trains the spiking model's readout `fc` on time-averaged spike counts of
/// the layer feeding it, then rescales so that the summed readout current
/// equals gain times the trained logit.
Model train_snn_readout(Model snn, const Dataset& train, const TrainOptions& options, float gain = 4.0f);

struct BlobsSpec {
    std::size_t n = 1000;
    std::size_t d = 64;
    std::size_t classes = 10;
    double spread = 0.3;
    std::uint64_t seed = 1;
};

struct EventsSpec {
    std::size_t n = 600;
    std::size_t time_steps = 20;
    std::size_t d = 128;
    std::size_t classes = 4;
    double rate = 0.5;
    double noise_rate = 0.02;
    std::uint64_t seed = 1;
};

/// Everything needed to rebuild a trained desk-scale model from scratch.
struct ScenarioSpec {
    std::string model_id = "mlp"; // mlp | cnn | snn
    BlobsSpec blobs;
    EventsSpec events;
    std::vector<std::size_t> hidden = {384, 192};
    std::size_t cnn_channels = 4;
    double test_fraction = 0.2;
    std::uint64_t model_seed = 1;
    std::optional<TrainOptions> train; // unset: default_train_options(model_id)
};

TrainOptions default_train_options(std::string_view model_id);

struct Scenario {
    std::string model_id;
    std::string dataset_id;
    Model model;
    Dataset train;
    Dataset test;
    double baseline_accuracy = 0.0;
};

/// Dataset split for the scenario's model (blobs for mlp/cnn, events for snn),
/// shaped as the model expects.
std::pair<Dataset, Dataset> scenario_data(const ScenarioSpec& spec);

/// Builds data, trains the model, and measures test accuracy.
Scenario build_scenario(const ScenarioSpec& spec);

} // namespace bitfault::zoo
