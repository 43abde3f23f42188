#pragma once

#include "bitfault/dataset.hpp"
#include "bitfault/fault.hpp"
#include "bitfault/tensor.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bitfault {

struct FullyConnected {
    DenseTensor weight; // [out, in]
    DenseTensor bias;   // [out]
};

struct Conv2D {
    DenseTensor weight; // [out_ch, in_ch, kh, kw]
    DenseTensor bias;   // [out_ch]
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct ReLU {};

/// Non-overlapping window x window average over [C, H, W]; remainders are dropped.
struct AvgPool {
    std::size_t window = 2;
};

/// Leaky integrate-and-fire: v <- decay * v + I; spike where v >= threshold;
/// v <- v - threshold on spike.
struct LIF {
    float decay = 0.9f;
    float threshold = 1.0f;
};

using LayerKind = std::variant<FullyConnected, Conv2D, ReLU, AvgPool, LIF>;

struct Layer {
    std::string name;
    LayerKind kind;

    std::string_view kind_name() const noexcept;
    bool has_weight() const noexcept;
    DenseTensor* weight() noexcept;
    const DenseTensor* weight() const noexcept;
    DenseTensor* bias() noexcept;
    const DenseTensor* bias() const noexcept;
};

/// Ordered layers plus the per-sample input shape. Spiking models take input
/// [time_steps, input_shape...] and return the output accumulated over time.
class Model {
public:
    Model() = default;
    /// Throws ShapeMismatch / InvalidArgument when layers do not chain.
    Model(std::vector<Layer> layers, Shape input_shape, std::size_t time_steps = 1);

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    Layer& layer(std::size_t i) { return layers_.at(i); }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }
    std::size_t layer_count() const noexcept { return layers_.size(); }

    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t time_steps() const noexcept { return time_steps_; }
    bool is_spiking() const noexcept { return spiking_; }

    /// Shape the full forward input must have.
    Shape forward_input_shape() const;
    /// Per-time-step output shape of layer i.
    const Shape& output_shape(std::size_t i) const { return output_shapes_.at(i); }
    const Shape& final_output_shape() const { return output_shapes_.back(); }

    /// Throws UnknownLayer.
    std::size_t index_of(std::string_view name) const;

    /// Shape of the array a (target, site) pair addresses on a layer.
    /// SparseIndex: [numel(output), rank(output)] (the COO index array at
    /// full capacity). Throws InvalidSite for weight targets on weightless layers.
    Shape target_shape(std::size_t layer, TargetType target, SiteType site) const;

    /// Layers that have an addressable array for the target.
    std::vector<std::string> injectable_layers(TargetType target) const;

    std::size_t parameter_count() const;
    std::size_t weight_count() const;

    // Instrumentation token; at most one injection handler at a time.
    bool armed() const noexcept { return armed_; }
    void set_armed(bool armed) noexcept { armed_ = armed; }

private:
    std::vector<Layer> layers_;
    Shape input_shape_;
    std::size_t time_steps_ = 1;
    bool spiking_ = false;
    std::vector<Shape> output_shapes_;
    bool armed_ = false;
};

struct StepInfo {
    std::size_t step = 0;
    std::size_t steps = 1;
};

using OutputTransform = std::function<void(DenseTensor&)>;
using OutputObserver = std::function<void(const DenseTensor&, StepInfo)>;

/// Per-layer output rewrites and read-only observers. Transforms run before
/// observers, in insertion order.
class HookSet {
public:
    void add_transform(std::size_t layer, OutputTransform t);
    void add_observer(std::size_t layer, OutputObserver o);
    void clear() noexcept { hooks_.clear(); }
    bool empty() const noexcept;

    void run(std::size_t layer, DenseTensor& out, StepInfo step) const;

private:
    struct LayerHooks {
        std::vector<OutputTransform> transforms;
        std::vector<OutputObserver> observers;
    };
    std::vector<LayerHooks> hooks_;
};

struct LIFState {
    std::vector<float> v;
    std::size_t t = 0;
};

/// One step of the leaky integrator. Sizes the state on first use.
DenseTensor lif_step(LIFState& state, const LIF& params, const DenseTensor& current);

/// One layer, one time step, no hooks. `in` must have the layer's input shape.
DenseTensor forward_layer(const Model& model, std::size_t layer, const DenseTensor& in, LIFState& state);

/// Throws ShapeMismatch when the input does not match forward_input_shape().
DenseTensor forward(const Model& model, const DenseTensor& input, const HookSet& hooks = {});

/// Argmax with NaN treated as -inf and ties going to the lowest index.
std::size_t argmax(std::span<const float> values) noexcept;

/// Fraction of samples whose argmax output equals the label. Throws EmptyDataset.
double accuracy(const Model& model, const Dataset& data, const HookSet& hooks = {});

} // namespace bitfault
