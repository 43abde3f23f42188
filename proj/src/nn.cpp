#include "bitfault/nn.hpp"

#include "bitfault/error.hpp"

#include <cmath>
#include <unordered_set>

namespace bitfault {

std::string_view Layer::kind_name() const noexcept {
    struct Visitor {
        std::string_view operator()(const FullyConnected&) const { return "fully_connected"; }
        std::string_view operator()(const Conv2D&) const { return "conv2d"; }
        std::string_view operator()(const ReLU&) const { return "relu"; }
        std::string_view operator()(const AvgPool&) const { return "avgpool"; }
        std::string_view operator()(const LIF&) const { return "lif"; }
    };
    return std::visit(Visitor{}, kind);
}

bool Layer::has_weight() const noexcept { return weight() != nullptr; }

DenseTensor* Layer::weight() noexcept {
    return const_cast<DenseTensor*>(static_cast<const Layer*>(this)->weight());
}

const DenseTensor* Layer::weight() const noexcept {
    if (auto* fc = std::get_if<FullyConnected>(&kind)) {
        return &fc->weight;
    }
    if (auto* conv = std::get_if<Conv2D>(&kind)) {
        return &conv->weight;
    }
    return nullptr;
}

DenseTensor* Layer::bias() noexcept {
    return const_cast<DenseTensor*>(static_cast<const Layer*>(this)->bias());
}

const DenseTensor* Layer::bias() const noexcept {
    if (auto* fc = std::get_if<FullyConnected>(&kind)) {
        return &fc->bias;
    }
    if (auto* conv = std::get_if<Conv2D>(&kind)) {
        return &conv->bias;
    }
    return nullptr;
}

namespace {

[[noreturn]] void shape_error(const Layer& l, const std::string& what) {
    throw Error(ErrorCode::ShapeMismatch, "layer '" + l.name + "': " + what);
}

Shape infer_output_shape(const Layer& l, const Shape& in) {
    if (auto* fc = std::get_if<FullyConnected>(&l.kind)) {
        const Shape& w = fc->weight.shape();
        if (w.size() != 2 || fc->bias.shape() != Shape{w[0]}) {
            shape_error(l, "weight must be [out, in] and bias [out]");
        }
        if (numel(in) != w[1]) {
            shape_error(l, "expects " + std::to_string(w[1]) + " inputs, got " + shape_to_string(in));
        }
        return {w[0]};
    }
    if (auto* conv = std::get_if<Conv2D>(&l.kind)) {
        const Shape& w = conv->weight.shape();
        if (w.size() != 4 || conv->bias.shape() != Shape{w[0]}) {
            shape_error(l, "weight must be [out_ch, in_ch, kh, kw] and bias [out_ch]");
        }
        if (in.size() != 3 || in[0] != w[1]) {
            shape_error(l, "expects [" + std::to_string(w[1]) + ", H, W] input, got " + shape_to_string(in));
        }
        if (conv->stride == 0 || in[1] + 2 * conv->padding < w[2] || in[2] + 2 * conv->padding < w[3]) {
            shape_error(l, "kernel larger than padded input or zero stride");
        }
        return {w[0], (in[1] + 2 * conv->padding - w[2]) / conv->stride + 1,
                (in[2] + 2 * conv->padding - w[3]) / conv->stride + 1};
    }
    if (auto* pool = std::get_if<AvgPool>(&l.kind)) {
        if (in.size() != 3 || pool->window == 0 || in[1] < pool->window || in[2] < pool->window) {
            shape_error(l, "avgpool needs [C, H, W] input at least one window wide");
        }
        return {in[0], in[1] / pool->window, in[2] / pool->window};
    }
    if (auto* lif = std::get_if<LIF>(&l.kind)) {
        if (!(lif->decay >= 0.0f && lif->decay < 1.0f) || !(lif->threshold > 0.0f)) {
            throw Error(ErrorCode::InvalidArgument, "layer '" + l.name + "': LIF needs decay in [0,1), threshold > 0");
        }
    }
    return in;
}

void fully_connected(const FullyConnected& fc, const DenseTensor& in, DenseTensor& out) {
    const std::size_t n_out = fc.weight.shape()[0];
    const std::size_t n_in = fc.weight.shape()[1];
    const float* w = fc.weight.data().data();
    const float* x = in.data().data();
    float* y = out.data().data();
    for (std::size_t o = 0; o < n_out; ++o) {
        const float* row = w + o * n_in;
        // Eight fixed lanes: a deterministic summation order the compiler
        // can still vectorize.
        float lane[8] = {};
        std::size_t i = 0;
        for (; i + 8 <= n_in; i += 8) {
            for (std::size_t l = 0; l < 8; ++l) {
                lane[l] += row[i + l] * x[i + l];
            }
        }
        for (; i < n_in; ++i) {
            lane[0] += row[i] * x[i];
        }
        const float acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
        y[o] = acc + fc.bias[o];
    }
}

void conv2d(const Conv2D& conv, const DenseTensor& in, DenseTensor& out) {
    const Shape& ws = conv.weight.shape();
    const std::size_t oc = ws[0], ic = ws[1], kh = ws[2], kw = ws[3];
    const std::size_t H = in.shape()[1], W = in.shape()[2];
    const std::size_t OH = out.shape()[1], OW = out.shape()[2];
    const auto pad = static_cast<std::ptrdiff_t>(conv.padding);
    const auto x = in.data();
    const auto w = conv.weight.data();
    auto y = out.data();
    for (std::size_t o = 0; o < oc; ++o) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                float acc = 0.0f;
                for (std::size_t c = 0; c < ic; ++c) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * conv.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
                            continue;
                        }
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * conv.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) {
                                continue;
                            }
                            acc += w[((o * ic + c) * kh + ky) * kw + kx] *
                                   x[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
                        }
                    }
                }
                y[(o * OH + oy) * OW + ox] = acc + conv.bias[o];
            }
        }
    }
}

void avgpool(const AvgPool& pool, const DenseTensor& in, DenseTensor& out) {
    const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
    const std::size_t OH = out.shape()[1], OW = out.shape()[2];
    const std::size_t k = pool.window;
    const float inv = 1.0f / static_cast<float>(k * k);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                float acc = 0.0f;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        acc += in[(c * H + oy * k + dy) * W + ox * k + dx];
                    }
                }
                out[(c * OH + oy) * OW + ox] = acc * inv;
            }
        }
    }
}

DenseTensor apply_layer(const Layer& layer, const Shape& out_shape, const DenseTensor& in, LIFState& state) {
    if (auto* lif = std::get_if<LIF>(&layer.kind)) {
        return lif_step(state, *lif, in);
    }
    if (std::holds_alternative<ReLU>(layer.kind)) {
        DenseTensor out = in;
        for (float& v : out.data()) {
            // NaN passes through so faulted values stay visible downstream.
            v = (v > 0.0f || std::isnan(v)) ? v : 0.0f;
        }
        return out;
    }
    DenseTensor out(out_shape);
    if (auto* fc = std::get_if<FullyConnected>(&layer.kind)) {
        fully_connected(*fc, in, out);
    } else if (auto* conv = std::get_if<Conv2D>(&layer.kind)) {
        conv2d(*conv, in, out);
    } else if (auto* pool = std::get_if<AvgPool>(&layer.kind)) {
        avgpool(*pool, in, out);
    }
    return out;
}

} // namespace

Model::Model(std::vector<Layer> layers, Shape input_shape, std::size_t time_steps)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)), time_steps_(time_steps) {
    if (layers_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "model needs at least one layer");
    }
    if (input_shape_.empty() || numel(input_shape_) == 0) {
        throw Error(ErrorCode::InvalidArgument, "input shape must be non-empty with positive dims");
    }
    std::unordered_set<std::string> names;
    Shape cur = input_shape_;
    for (const Layer& l : layers_) {
        if (l.name.empty() || !names.insert(l.name).second) {
            throw Error(ErrorCode::InvalidArgument, "layer names must be unique and non-empty: '" + l.name + "'");
        }
        spiking_ = spiking_ || std::holds_alternative<LIF>(l.kind);
        cur = infer_output_shape(l, cur);
        output_shapes_.push_back(cur);
    }
    if (time_steps_ == 0 || (!spiking_ && time_steps_ != 1)) {
        throw Error(ErrorCode::InvalidArgument, "time_steps must be 1 for non-spiking models and >= 1 otherwise");
    }
}

Shape Model::forward_input_shape() const {
    if (!spiking_) {
        return input_shape_;
    }
    Shape s{time_steps_};
    s.insert(s.end(), input_shape_.begin(), input_shape_.end());
    return s;
}

std::size_t Model::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].name == name) {
            return i;
        }
    }
    throw Error(ErrorCode::UnknownLayer, "no layer named '" + std::string(name) + "'");
}

Shape Model::target_shape(std::size_t layer, TargetType target, SiteType site) const {
    if (!site_valid_for(site, target)) {
        throw Error(ErrorCode::InvalidSite, std::string(to_string(site)) + " site needs an output target");
    }
    const Layer& l = layers_.at(layer);
    if (target == TargetType::Weight) {
        if (!l.has_weight()) {
            throw Error(ErrorCode::InvalidSite, "layer '" + l.name + "' has no weight");
        }
        return l.weight()->shape();
    }
    const Shape& out = output_shapes_.at(layer);
    if (site == SiteType::SparseIndex) {
        return {numel(out), out.size()};
    }
    return out;
}

std::vector<std::string> Model::injectable_layers(TargetType target) const {
    std::vector<std::string> names;
    for (const Layer& l : layers_) {
        if (target == TargetType::Output || l.has_weight()) {
            names.push_back(l.name);
        }
    }
    return names;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) {
        if (l.has_weight()) {
            n += l.weight()->size() + l.bias()->size();
        }
    }
    return n;
}

std::size_t Model::weight_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) {
        if (l.has_weight()) {
            n += l.weight()->size();
        }
    }
    return n;
}

void HookSet::add_transform(std::size_t layer, OutputTransform t) {
    if (hooks_.size() <= layer) {
        hooks_.resize(layer + 1);
    }
    hooks_[layer].transforms.push_back(std::move(t));
}

void HookSet::add_observer(std::size_t layer, OutputObserver o) {
    if (hooks_.size() <= layer) {
        hooks_.resize(layer + 1);
    }
    hooks_[layer].observers.push_back(std::move(o));
}

bool HookSet::empty() const noexcept {
    for (const auto& h : hooks_) {
        if (!h.transforms.empty() || !h.observers.empty()) {
            return false;
        }
    }
    return true;
}

void HookSet::run(std::size_t layer, DenseTensor& out, StepInfo step) const {
    if (layer >= hooks_.size()) {
        return;
    }
    const LayerHooks& h = hooks_[layer];
    for (const auto& t : h.transforms) {
        t(out);
    }
    for (const auto& o : h.observers) {
        o(out, step);
    }
}

DenseTensor lif_step(LIFState& state, const LIF& params, const DenseTensor& current) {
    const auto in = current.data();
    if (state.v.empty()) {
        state.v.assign(in.size(), 0.0f);
    } else if (state.v.size() != in.size()) {
        throw Error(ErrorCode::ShapeMismatch, "LIF state size differs from input current");
    }
    DenseTensor spikes(current.shape());
    auto s = spikes.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        float v = params.decay * state.v[i] + in[i];
        if (v >= params.threshold) {
            s[i] = 1.0f;
            v -= params.threshold;
        }
        state.v[i] = v;
    }
    ++state.t;
    return spikes;
}

DenseTensor forward_layer(const Model& model, std::size_t layer, const DenseTensor& in, LIFState& state) {
    return apply_layer(model.layer(layer), model.output_shape(layer), in, state);
}

DenseTensor forward(const Model& model, const DenseTensor& input, const HookSet& hooks) {
    const Shape expected = model.forward_input_shape();
    if (input.shape() != expected) {
        throw Error(ErrorCode::ShapeMismatch,
                    "input " + shape_to_string(input.shape()) + " but model expects " + shape_to_string(expected));
    }
    const std::size_t steps = model.is_spiking() ? model.time_steps() : 1;
    const std::size_t frame = numel(model.input_shape());
    std::vector<LIFState> states(model.layer_count());
    DenseTensor total;
    for (std::size_t t = 0; t < steps; ++t) {
        const auto src = input.data().subspan(t * frame, frame);
        DenseTensor cur(model.input_shape(), std::vector<float>(src.begin(), src.end()));
        for (std::size_t i = 0; i < model.layer_count(); ++i) {
            cur = apply_layer(model.layer(i), model.output_shape(i), cur, states[i]);
            hooks.run(i, cur, StepInfo{t, steps});
        }
        if (t == 0) {
            total = std::move(cur);
        } else {
            auto acc = total.data();
            const auto add = cur.data();
            for (std::size_t j = 0; j < acc.size(); ++j) {
                acc[j] += add[j];
            }
        }
    }
    return total;
}

std::size_t argmax(std::span<const float> values) noexcept {
    const auto key = [](float v) { return std::isnan(v) ? -INFINITY : v; };
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (key(values[i]) > key(values[best])) {
            best = i;
        }
    }
    return best;
}

double accuracy(const Model& model, const Dataset& data, const HookSet& hooks) {
    if (data.size() == 0) {
        throw Error(ErrorCode::EmptyDataset, "accuracy over an empty dataset");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const DenseTensor out = forward(model, data.sample(i), hooks);
        if (static_cast<int>(argmax(out.data())) == data.labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace bitfault
