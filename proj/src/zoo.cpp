#include "bitfault/zoo.hpp"

#include "bitfault/error.hpp"
#include "bitfault/rng.hpp"

#include <cmath>

namespace bitfault::zoo {
namespace {

DenseTensor uniform_tensor(Shape shape, double lo, double hi, SplitMix64& rng) {
    DenseTensor t(std::move(shape));
    for (float& v : t.data()) {
        v = static_cast<float>(rng.uniform(lo, hi));
    }
    return t;
}

Layer fc_layer(std::string name, std::size_t in, std::size_t out, SplitMix64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in));
    return Layer{std::move(name), FullyConnected{uniform_tensor({out, in}, -a, a, rng), DenseTensor(Shape{out})}};
}

} // namespace

Dataset make_blobs(std::size_t n, std::size_t d, std::size_t classes, double spread, std::uint64_t seed) {
    if (classes < 2 || n < classes || d == 0 || !(spread >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "make_blobs needs C >= 2, n >= C, d > 0, spread >= 0");
    }
    SplitMix64 rng(seed);
    std::vector<double> centers(classes * d);
    for (std::size_t c = 0; c < classes; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = rng.normal();
            centers[c * d + j] = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < d; ++j) {
            centers[c * d + j] /= norm;
        }
    }
    Dataset ds;
    std::vector<float> data(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        for (std::size_t j = 0; j < d; ++j) {
            data[i * d + j] = static_cast<float>(centers[c * d + j] + spread * rng.normal());
        }
        ds.labels.push_back(static_cast<int>(c));
        ds.source_indices.push_back(i);
    }
    ds.features = DenseTensor({n, d}, std::move(data));
    ds.n_classes = classes;
    ds.seed = seed;
    return ds;
}

Dataset make_events(std::size_t n, std::size_t time_steps, std::size_t d, std::size_t classes,
                    const std::vector<double>& rate_per_class, std::uint64_t seed, double noise_rate) {
    if (classes < 2 || n < classes || time_steps == 0 || d < classes || rate_per_class.size() != classes) {
        throw Error(ErrorCode::InvalidArgument, "make_events needs C >= 2, n >= C, T > 0, d >= C, C rates");
    }
    for (double r : rate_per_class) {
        if (!(r > 0.0 && r <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "class firing rates must lie in (0, 1]");
        }
    }
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "noise rate must lie in [0, 1)");
    }
    const std::size_t block = d / classes;
    SplitMix64 rng(seed);
    Dataset ds;
    std::vector<float> data(n * time_steps * d, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        for (std::size_t t = 0; t < time_steps; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                const bool in_block = j >= c * block && j < (c + 1) * block;
                const double p = in_block ? rate_per_class[c] : noise_rate;
                data[(i * time_steps + t) * d + j] = rng.bernoulli(p) ? 1.0f : 0.0f;
            }
        }
        ds.labels.push_back(static_cast<int>(c));
        ds.source_indices.push_back(i);
    }
    ds.features = DenseTensor({n, time_steps, d}, std::move(data));
    ds.n_classes = classes;
    ds.seed = seed;
    return ds;
}

Dataset reshape_samples(const Dataset& d, const Shape& sample_shape) {
    Dataset out = d;
    Shape full{d.size()};
    full.insert(full.end(), sample_shape.begin(), sample_shape.end());
    out.features = d.features.reshaped(std::move(full));
    return out;
}

Model make_mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<Layer> layers;
    std::size_t in = inputs;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        layers.push_back(fc_layer("fc" + std::to_string(i + 1), in, hidden[i], rng));
        layers.push_back(Layer{"relu" + std::to_string(i + 1), ReLU{}});
        in = hidden[i];
    }
    layers.push_back(fc_layer("fc" + std::to_string(hidden.size() + 1), in, classes, rng));
    return Model(std::move(layers), {inputs});
}

Model make_cnn(const Shape& input_shape, std::size_t channels, std::size_t classes, std::uint64_t seed) {
    if (input_shape.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, "cnn input must be [C, H, W]");
    }
    SplitMix64 rng(seed);
    const std::size_t ic = input_shape[0];
    const double a = std::sqrt(6.0 / static_cast<double>(ic * 9));
    std::vector<Layer> layers;
    layers.push_back(Layer{"conv1", Conv2D{uniform_tensor({channels, ic, 3, 3}, -a, a, rng),
                                           DenseTensor(Shape{channels}), 1, 1}});
    layers.push_back(Layer{"relu1", ReLU{}});
    layers.push_back(Layer{"pool1", AvgPool{2}});
    const std::size_t flat = channels * (input_shape[1] / 2) * (input_shape[2] / 2);
    layers.push_back(fc_layer("fc", flat, classes, rng));
    return Model(std::move(layers), input_shape);
}

Model make_snn(const Shape& frame_shape, std::size_t time_steps, std::size_t classes, std::uint64_t seed,
               const SnnParams& p) {
    if (frame_shape.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, "snn frame must be [C, H, W]");
    }
    SplitMix64 rng(seed);
    const std::size_t ic = frame_shape[0];
    const std::size_t ch = p.channels;
    // Excitatory-leaning random features so hidden neurons fire on class blocks.
    std::vector<Layer> layers;
    layers.push_back(Layer{"conv1", Conv2D{uniform_tensor({ch, ic, 3, 3}, -0.1, 0.5, rng), DenseTensor(Shape{ch}), 1, 1}});
    layers.push_back(Layer{"lif1", LIF{p.hidden_decay, p.hidden_threshold}});
    layers.push_back(Layer{"conv2", Conv2D{uniform_tensor({ch, ch, 3, 3}, -0.05, 0.25, rng), DenseTensor(Shape{ch}), 2, 1}});
    layers.push_back(Layer{"lif2", LIF{p.hidden_decay, p.hidden_threshold}});
    const std::size_t flat = ch * ((frame_shape[1] + 1) / 2) * ((frame_shape[2] + 1) / 2);
    layers.push_back(Layer{"fc", FullyConnected{DenseTensor({classes, flat}), DenseTensor(Shape{classes})}});
    layers.push_back(Layer{"lif_out", LIF{p.output_decay, p.output_threshold}});
    return Model(std::move(layers), frame_shape, time_steps);
}

Model train_snn_readout(Model snn, const Dataset& train, const TrainOptions& options, float gain) {
    const std::size_t readout = snn.index_of("fc");
    const std::size_t feeder = readout - 1;
    const Shape& feat_shape = snn.output_shape(feeder);
    const std::size_t n_feat = numel(feat_shape);
    const auto T = static_cast<float>(snn.time_steps());

    // Time-averaged spike counts of the layer feeding the readout.
    std::vector<float> features;
    features.reserve(train.size() * n_feat);
    for (std::size_t i = 0; i < train.size(); ++i) {
        std::vector<float> counts(n_feat, 0.0f);
        HookSet hooks;
        hooks.add_observer(feeder, [&counts](const DenseTensor& out, StepInfo) {
            for (std::size_t j = 0; j < counts.size(); ++j) {
                counts[j] += out[j];
            }
        });
        forward(snn, train.sample(i), hooks);
        for (float c : counts) {
            features.push_back(c / T);
        }
    }
    Dataset feat;
    feat.features = DenseTensor({train.size(), n_feat}, std::move(features));
    feat.labels = train.labels;
    feat.n_classes = train.n_classes;
    feat.seed = train.seed;

    SplitMix64 rng(options.seed);
    Model linear({fc_layer("fc", n_feat, train.n_classes, rng)}, {n_feat});
    linear = train_sgd(std::move(linear), feat, options);

    // sum_t (W/T * s_t + b/T) * gain == gain * (W * counts/T + b)
    auto& dst = std::get<FullyConnected>(snn.layer(readout).kind);
    const auto& src = std::get<FullyConnected>(linear.layer(0).kind);
    for (std::size_t j = 0; j < dst.weight.size(); ++j) {
        dst.weight[j] = src.weight[j] * gain / T;
    }
    for (std::size_t j = 0; j < dst.bias.size(); ++j) {
        dst.bias[j] = src.bias[j] * gain / T;
    }
    return snn;
}

TrainOptions default_train_options(std::string_view model_id) {
    if (model_id == "snn") {
        return TrainOptions{.epochs = 30, .learning_rate = 0.1f, .batch_size = 16, .seed = 1};
    }
    return TrainOptions{.epochs = 20, .learning_rate = 0.05f, .batch_size = 16, .seed = 1, .weight_decay = 0.03f};
}

std::pair<Dataset, Dataset> scenario_data(const ScenarioSpec& spec) {
    if (spec.model_id == "snn") {
        const EventsSpec& e = spec.events;
        Dataset all = make_events(e.n, e.time_steps, e.d, e.classes, std::vector<double>(e.classes, e.rate), e.seed,
                                  e.noise_rate);
        if (e.d % 16 != 0) {
            throw Error(ErrorCode::InvalidArgument, "snn events need d divisible by 16");
        }
        all = reshape_samples(all, {e.time_steps, 1, e.d / 16, 16});
        return train_test_split(all, spec.test_fraction);
    }
    const BlobsSpec& b = spec.blobs;
    Dataset all = make_blobs(b.n, b.d, b.classes, b.spread, b.seed);
    if (spec.model_id == "cnn") {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(b.d))));
        if (side * side != b.d) {
            throw Error(ErrorCode::InvalidArgument, "cnn blobs need a square feature count");
        }
        all = reshape_samples(all, {1, side, side});
    } else if (spec.model_id != "mlp") {
        throw Error(ErrorCode::InvalidArgument, "unknown zoo model '" + spec.model_id + "'");
    }
    return train_test_split(all, spec.test_fraction);
}

Scenario build_scenario(const ScenarioSpec& spec) {
    auto [train, test] = scenario_data(spec);
    const TrainOptions opts = spec.train.value_or(default_train_options(spec.model_id));
    Scenario s;
    s.model_id = spec.model_id;
    if (spec.model_id == "snn") {
        s.dataset_id = "events";
        const Shape sample = train.sample_shape();
        const Shape frame(sample.begin() + 1, sample.end());
        Model snn = make_snn(frame, spec.events.time_steps, spec.events.classes, spec.model_seed);
        s.model = train_snn_readout(std::move(snn), train, opts);
    } else if (spec.model_id == "cnn") {
        s.dataset_id = "blobs";
        Model cnn = make_cnn(train.sample_shape(), spec.cnn_channels, spec.blobs.classes, spec.model_seed);
        s.model = train_sgd(std::move(cnn), train, opts);
    } else {
        s.dataset_id = "blobs";
        Model mlp = make_mlp(spec.blobs.d, spec.hidden, spec.blobs.classes, spec.model_seed);
        s.model = train_sgd(std::move(mlp), train, opts);
    }
    s.baseline_accuracy = accuracy(s.model, test);
    s.train = std::move(train);
    s.test = std::move(test);
    return s;
}

} // namespace bitfault::zoo
