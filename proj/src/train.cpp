#include "bitfault/train.hpp"

#include "bitfault/error.hpp"
#include "bitfault/rng.hpp"

#include <cmath>
#include <numeric>

namespace bitfault {
namespace {

void require_differentiable(const Model& model) {
    for (const Layer& l : model.layers()) {
        if (std::holds_alternative<LIF>(l.kind)) {
            throw Error(ErrorCode::NonDifferentiableLayer, "layer '" + l.name + "' is a spiking neuron");
        }
    }
}

// Gradient of the loss w.r.t. the layer input, accumulating parameter grads.
DenseTensor backward_layer(const Layer& layer, const DenseTensor& in, const DenseTensor& grad_out,
                           DenseTensor& grad_w, DenseTensor& grad_b) {
    DenseTensor grad_in(in.shape());
    auto gi = grad_in.data();
    const auto go = grad_out.data();
    const auto x = in.data();

    if (auto* fc = std::get_if<FullyConnected>(&layer.kind)) {
        const std::size_t n_out = fc->weight.shape()[0];
        const std::size_t n_in = fc->weight.shape()[1];
        const auto w = fc->weight.data();
        auto gw = grad_w.data();
        auto gb = grad_b.data();
        for (std::size_t o = 0; o < n_out; ++o) {
            const float g = go[o];
            gb[o] += g;
            for (std::size_t i = 0; i < n_in; ++i) {
                gw[o * n_in + i] += g * x[i];
                gi[i] += g * w[o * n_in + i];
            }
        }
    } else if (auto* conv = std::get_if<Conv2D>(&layer.kind)) {
        const Shape& ws = conv->weight.shape();
        const std::size_t oc = ws[0], ic = ws[1], kh = ws[2], kw = ws[3];
        const std::size_t H = in.shape()[1], W = in.shape()[2];
        const std::size_t OH = grad_out.shape()[1], OW = grad_out.shape()[2];
        const auto pad = static_cast<std::ptrdiff_t>(conv->padding);
        const auto w = conv->weight.data();
        auto gw = grad_w.data();
        auto gb = grad_b.data();
        for (std::size_t o = 0; o < oc; ++o) {
            for (std::size_t oy = 0; oy < OH; ++oy) {
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    const float g = go[(o * OH + oy) * OW + ox];
                    gb[o] += g;
                    for (std::size_t c = 0; c < ic; ++c) {
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * conv->stride + ky) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
                                continue;
                            }
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * conv->stride + kx) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) {
                                    continue;
                                }
                                const std::size_t wi = ((o * ic + c) * kh + ky) * kw + kx;
                                const std::size_t xi =
                                    (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix);
                                gw[wi] += g * x[xi];
                                gi[xi] += g * w[wi];
                            }
                        }
                    }
                }
            }
        }
    } else if (std::holds_alternative<ReLU>(layer.kind)) {
        for (std::size_t i = 0; i < gi.size(); ++i) {
            gi[i] = x[i] > 0.0f ? go[i] : 0.0f;
        }
    } else if (auto* pool = std::get_if<AvgPool>(&layer.kind)) {
        const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
        const std::size_t OH = grad_out.shape()[1], OW = grad_out.shape()[2];
        const std::size_t k = pool->window;
        const float inv = 1.0f / static_cast<float>(k * k);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t oy = 0; oy < OH; ++oy) {
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    const float g = go[(c * OH + oy) * OW + ox] * inv;
                    for (std::size_t dy = 0; dy < k; ++dy) {
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            gi[(c * H + oy * k + dy) * W + ox * k + dx] = g;
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

} // namespace

Gradients zero_gradients(const Model& model) {
    Gradients g;
    for (const Layer& l : model.layers()) {
        if (l.has_weight()) {
            g.weight.emplace_back(l.weight()->shape());
            g.bias.emplace_back(l.bias()->shape());
        } else {
            g.weight.emplace_back();
            g.bias.emplace_back();
        }
    }
    return g;
}

double cross_entropy(std::span<const float> logits, int label) {
    double max_v = -INFINITY;
    for (float v : logits) {
        max_v = std::max(max_v, static_cast<double>(v));
    }
    double sum = 0.0;
    for (float v : logits) {
        sum += std::exp(static_cast<double>(v) - max_v);
    }
    return std::log(sum) + max_v - static_cast<double>(logits[static_cast<std::size_t>(label)]);
}

double accumulate_gradients(const Model& model, const DenseTensor& input, int label, Gradients& grads) {
    require_differentiable(model);
    if (input.shape() != model.input_shape()) {
        throw Error(ErrorCode::ShapeMismatch, "training input does not match model input shape");
    }
    // activations[i] is the input of layer i.
    std::vector<DenseTensor> activations;
    activations.reserve(model.layer_count() + 1);
    activations.push_back(input);
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        LIFState unused;
        activations.push_back(forward_layer(model, i, activations.back(), unused));
    }
    const DenseTensor& logits = activations.back();
    const double loss = cross_entropy(logits.data(), label);

    // d loss / d logits = softmax - onehot
    DenseTensor grad(logits.shape());
    {
        double max_v = -INFINITY;
        for (float v : logits.data()) {
            max_v = std::max(max_v, static_cast<double>(v));
        }
        double sum = 0.0;
        for (float v : logits.data()) {
            sum += std::exp(static_cast<double>(v) - max_v);
        }
        for (std::size_t j = 0; j < grad.size(); ++j) {
            const double p = std::exp(static_cast<double>(logits[j]) - max_v) / sum;
            grad[j] = static_cast<float>(p - (static_cast<int>(j) == label ? 1.0 : 0.0));
        }
    }
    for (std::size_t i = model.layer_count(); i-- > 0;) {
        grad = backward_layer(model.layer(i), activations[i], grad, grads.weight[i], grads.bias[i]);
        grad = grad.reshaped(activations[i].shape());
    }
    return loss;
}

Model train_sgd(Model model, const Dataset& train, const TrainOptions& options, TrainReport* report) {
    require_differentiable(model);
    if (train.size() == 0) {
        throw Error(ErrorCode::EmptyDataset, "training set is empty");
    }
    if (options.batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
    }
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(options.seed);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            Gradients g = zero_gradients(model);
            for (std::size_t b = start; b < end; ++b) {
                epoch_loss += accumulate_gradients(model, train.sample(order[b]), train.labels[order[b]], g);
            }
            if (options.learning_rate == 0.0f) {
                continue;
            }
            const float step = options.learning_rate / static_cast<float>(end - start);
            for (std::size_t l = 0; l < model.layer_count(); ++l) {
                Layer& layer = model.layer(l);
                if (!layer.has_weight()) {
                    continue;
                }
                auto w = layer.weight()->data();
                const auto gw = g.weight[l].data();
                const float decay = options.learning_rate * options.weight_decay;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    w[j] -= step * gw[j] + decay * w[j];
                }
                auto bias = layer.bias()->data();
                const auto gb = g.bias[l].data();
                for (std::size_t j = 0; j < bias.size(); ++j) {
                    bias[j] -= step * gb[j];
                }
            }
        }
        if (report != nullptr) {
            report->epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        }
    }
    return model;
}

} // namespace bitfault
