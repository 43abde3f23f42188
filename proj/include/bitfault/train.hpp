#pragma once

#include "bitfault/dataset.hpp"
#include "bitfault/nn.hpp"

#include <cstdint>
#include <vector>

namespace bitfault {

struct TrainOptions {
    std::size_t epochs = 10;
    float learning_rate = 0.05f;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    float weight_decay = 0.0f; // L2 on weights only, not biases
};

struct TrainReport {
    std::vector<double> epoch_loss; // mean cross-entropy seen during each epoch
};

/// Per-layer parameter gradients; empty tensors for weightless layers.
struct Gradients {
    std::vector<DenseTensor> weight;
    std::vector<DenseTensor> bias;
};

Gradients zero_gradients(const Model& model);

/// Softmax cross-entropy of one logit vector, evaluated in double.
double cross_entropy(std::span<const float> logits, int label);

/// Backpropagates one sample and adds its gradients into `grads`.
/// Returns the sample loss. Throws NonDifferentiableLayer for spiking models.
double accumulate_gradients(const Model& model, const DenseTensor& input, int label, Gradients& grads);

/// Mini-batch SGD on softmax cross-entropy; deterministic given options.seed.
Model train_sgd(Model model, const Dataset& train, const TrainOptions& options, TrainReport* report = nullptr);

} // namespace bitfault
