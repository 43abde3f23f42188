#include "bitfault/injector.hpp"

#include "bitfault/error.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <tuple>

namespace bitfault {
namespace {

std::int64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

bool has_nan(std::span<const float> values) {
    for (float v : values) {
        if (std::isnan(v)) {
            return true;
        }
    }
    return false;
}

void mask_quantized(DenseTensor& out, const FaultMask& mask) {
    QuantTensor q = quantize(out);
    apply_mask_in_place(std::span<std::int32_t>(q.codes), mask);
    out = dequantize(q);
}

void mask_sparse(DenseTensor& out, const FaultMask& mask) {
    SparseTensor s = to_coo(out);
    apply_mask_prefix(std::span<std::uint32_t>(s.indices), mask);
    out = from_coo(s);
}

} // namespace

MonitorSummary summarize(std::span<const float> values) {
    MonitorSummary s;
    double sum = 0.0;
    std::size_t n = 0;
    for (float v : values) {
        if (std::isnan(v)) {
            ++s.nan_count;
            continue;
        }
        if (n == 0 || v < s.min) {
            s.min = v;
        }
        if (n == 0 || v > s.max) {
            s.max = v;
        }
        sum += v;
        ++n;
    }
    if (n > 0) {
        s.mean = sum / static_cast<double>(n);
    }
    return s;
}

std::size_t target_param_count(const Model& model, std::size_t layer, TargetType target, SiteType site) {
    return numel(model.target_shape(layer, target, site));
}

InjectionHandler::InjectionHandler(Model& model, std::span<const Injection> injections) : model_(model) {
    if (model.armed()) {
        throw Error(ErrorCode::DoubleArm, "model already has an armed injection handler");
    }

    // Validate and compile everything before touching the model.
    using Key = std::tuple<std::size_t, TargetType, SiteType>;
    std::map<Key, FaultMask> masks;
    std::vector<std::pair<const Monitor*, std::size_t>> monitors;
    std::vector<TraceRow> trace;
    trace.reserve(injections.size());
    // Sampled faults arrive grouped by tensor; skip the lookups on repeats.
    const Fault* prev = nullptr;
    FaultMask* mask = nullptr;
    for (const Injection& inj : injections) {
        if (const auto* f = std::get_if<Fault>(&inj)) {
            if (prev == nullptr || f->layer_name != prev->layer_name || f->target != prev->target ||
                f->site != prev->site) {
                const std::size_t layer = model.index_of(f->layer_name);
                const Key key{layer, f->target, f->site};
                auto it = masks.find(key);
                if (it == masks.end()) {
                    const Shape shape = model.target_shape(layer, f->target, f->site); // InvalidSite
                    it = masks.emplace(key, FaultMask::neutral(shape)).first;
                }
                mask = &it->second;
            }
            prev = f;
            if (f->element_indices.empty()) {
                throw Error(ErrorCode::InvalidArgument, "fault on '" + f->layer_name + "' names no element");
            }
            if (f->element_indices.size() != f->bit_positions.size()) {
                throw Error(ErrorCode::InvalidArgument, "one bit list is required per element");
            }
            for (std::size_t e = 0; e < f->element_indices.size(); ++e) {
                const std::uint64_t flat = flatten(f->element_indices[e], mask->shape);
                for (int bit : f->bit_positions[e]) {
                    add_mask_bit(*mask, flat, bit, f->kind);
                    trace.push_back(TraceRow{f->layer_name, f->target, f->site, f->kind, flat, bit});
                }
            }
        } else {
            const auto& m = std::get<Monitor>(inj);
            const std::size_t layer = model.index_of(m.layer_name);
            if (m.target == TargetType::Weight && !model.layer(layer).has_weight()) {
                throw Error(ErrorCode::InvalidSite, "layer '" + m.layer_name + "' has no weight to monitor");
            }
            monitors.emplace_back(&m, layer);
        }
    }

    // Arm. Nothing below throws except allocation.
    for (auto& [key, mask] : masks) {
        const auto [layer, target, site] = key;
        if (target == TargetType::Weight) {
            DenseTensor& w = *model.layer(layer).weight();
            backups_.push_back(Backup{layer, w});
            apply_mask_in_place(w.data(), mask);
            continue;
        }
        auto shared = std::make_shared<const FaultMask>(std::move(mask));
        switch (site) {
        case SiteType::DenseFloat:
            hooks_.add_transform(layer, [shared](DenseTensor& out) { apply_mask_in_place(out.data(), *shared); });
            break;
        case SiteType::QuantizedInt:
            hooks_.add_transform(layer, [shared](DenseTensor& out) { mask_quantized(out, *shared); });
            break;
        case SiteType::SparseIndex:
            hooks_.add_transform(layer, [shared](DenseTensor& out) { mask_sparse(out, *shared); });
            break;
        }
    }
    for (const auto& [spec, layer] : monitors) {
        auto slot = std::make_unique<MonitorSlot>(MonitorSlot{*spec, layer, {}, 0});
        if (slot->spec.target == TargetType::Output) {
            MonitorSlot* s = slot.get();
            hooks_.add_observer(layer, [s](const DenseTensor& out, StepInfo) {
                s->captured.insert(s->captured.end(), out.data().begin(), out.data().end());
                ++s->steps;
            });
        }
        monitors_.push_back(std::move(slot));
    }
    trace_ = std::make_shared<const std::vector<TraceRow>>(std::move(trace));
    model.set_armed(true);
    armed_ = true;
}

InjectionHandler::~InjectionHandler() {
    if (armed_) {
        restore();
    }
}

RunResult InjectionHandler::run(const Dataset& data) {
    if (!armed_) {
        throw Error(ErrorCode::NotArmed, "run on a handler that is not armed");
    }
    if (data.size() == 0) {
        throw Error(ErrorCode::EmptyDataset, "run over an empty dataset");
    }
    RunResult r;
    r.trace = trace_;
    r.monitors.reserve(data.size() * monitors_.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (auto& m : monitors_) {
            m->captured.clear();
            m->steps = 0;
        }
        const DenseTensor out = forward(model_, data.sample(i), hooks_);
        if (static_cast<int>(argmax(out.data())) == data.labels[i]) {
            ++r.metrics.correct;
        }
        if (has_nan(out.data())) {
            ++r.metrics.nan_outputs;
        }
        const std::int64_t ts = now_ns();
        for (std::size_t k = 0; k < monitors_.size(); ++k) {
            MonitorSlot& m = *monitors_[k];
            MonitorRecord rec{m.spec.layer_name, m.spec.target, m.spec.capture, k, i, ts, {}, {}};
            DenseTensor captured;
            if (m.spec.target == TargetType::Weight) {
                captured = *model_.layer(m.layer).weight();
            } else {
                Shape shape = model_.output_shape(m.layer);
                if (model_.is_spiking()) {
                    shape.insert(shape.begin(), m.steps);
                }
                captured = DenseTensor(std::move(shape), std::move(m.captured));
                m.captured = {};
            }
            if (m.spec.capture == CaptureMode::FullTensor) {
                rec.tensor = std::move(captured);
            } else {
                rec.summary = summarize(captured.data());
            }
            r.monitors.push_back(std::move(rec));
        }
    }
    r.metrics.inputs = data.size();
    r.metrics.accuracy = static_cast<double>(r.metrics.correct) / static_cast<double>(data.size());
    return r;
}

void InjectionHandler::restore() {
    if (!armed_) {
        throw Error(ErrorCode::NotArmed, "restore on a handler that is not armed");
    }
    for (Backup& b : backups_) {
        *model_.layer(b.layer).weight() = std::move(b.weight);
    }
    backups_.clear();
    hooks_.clear();
    monitors_.clear();
    model_.set_armed(false);
    armed_ = false;
}

RunMetrics evaluate(const Model& model, const Dataset& data) {
    if (data.size() == 0) {
        throw Error(ErrorCode::EmptyDataset, "evaluation over an empty dataset");
    }
    RunMetrics m;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const DenseTensor out = forward(model, data.sample(i));
        if (static_cast<int>(argmax(out.data())) == data.labels[i]) {
            ++m.correct;
        }
        if (has_nan(out.data())) {
            ++m.nan_outputs;
        }
    }
    m.inputs = data.size();
    m.accuracy = static_cast<double>(m.correct) / static_cast<double>(data.size());
    return m;
}

} // namespace bitfault
