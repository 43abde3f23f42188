#include "bitfault/model_io.hpp"

#include "bitfault/error.hpp"
#include "bitfault/serialize.hpp"

#include <fstream>

namespace bitfault {
namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;

std::string tensor_file(const std::string& layer, const char* role) {
    return layer + "." + role + ".flt";
}

DenseTensor read_tensor(const std::filesystem::path& dir, const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw Error(ErrorCode::FormatError, std::string("layer entry lacks tensor file '") + key + "'");
    }
    return decode_dense(read_file(dir / j[key].get<std::string>()));
}

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) {
        throw Error(ErrorCode::FormatError, std::string("manifest entry lacks '") + key + "'");
    }
    try {
        return j[key].get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("manifest field '") + key + "': " + e.what());
    }
}

} // namespace

void save_model(const Model& model, const std::filesystem::path& dir, const json& meta) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    }
    json layers = json::array();
    for (const Layer& l : model.layers()) {
        json e{{"name", l.name}, {"kind", std::string(l.kind_name())}};
        if (const auto* conv = std::get_if<Conv2D>(&l.kind)) {
            e["stride"] = conv->stride;
            e["padding"] = conv->padding;
        } else if (const auto* pool = std::get_if<AvgPool>(&l.kind)) {
            e["window"] = pool->window;
        } else if (const auto* lif = std::get_if<LIF>(&l.kind)) {
            e["decay"] = lif->decay;
            e["threshold"] = lif->threshold;
        }
        if (l.has_weight()) {
            e["weight"] = tensor_file(l.name, "weight");
            e["bias"] = tensor_file(l.name, "bias");
            write_file(dir / tensor_file(l.name, "weight"), encode(*l.weight()));
            write_file(dir / tensor_file(l.name, "bias"), encode(*l.bias()));
        }
        layers.push_back(std::move(e));
    }
    const json manifest{{"format_version", kManifestVersion},
                        {"input_shape", model.input_shape()},
                        {"time_steps", model.time_steps()},
                        {"layers", std::move(layers)},
                        {"meta", meta}};
    std::ofstream out(dir / "model.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + (dir / "model.json").string());
    }
}

LoadedModel load_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json", std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + (dir / "model.json").string());
    }
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("model manifest: ") + e.what());
    }
    if (field<int>(manifest, "format_version") != kManifestVersion) {
        throw Error(ErrorCode::FormatError, "unsupported model manifest version");
    }
    std::vector<Layer> layers;
    for (const json& e : field<json>(manifest, "layers")) {
        const auto name = field<std::string>(e, "name");
        const auto kind = field<std::string>(e, "kind");
        if (kind == "fully_connected") {
            layers.push_back(Layer{name, FullyConnected{read_tensor(dir, e, "weight"), read_tensor(dir, e, "bias")}});
        } else if (kind == "conv2d") {
            layers.push_back(Layer{name, Conv2D{read_tensor(dir, e, "weight"), read_tensor(dir, e, "bias"),
                                                field<std::size_t>(e, "stride"), field<std::size_t>(e, "padding")}});
        } else if (kind == "relu") {
            layers.push_back(Layer{name, ReLU{}});
        } else if (kind == "avgpool") {
            layers.push_back(Layer{name, AvgPool{field<std::size_t>(e, "window")}});
        } else if (kind == "lif") {
            layers.push_back(Layer{name, LIF{field<float>(e, "decay"), field<float>(e, "threshold")}});
        } else {
            throw Error(ErrorCode::FormatError, "unknown layer kind '" + kind + "'");
        }
    }
    LoadedModel out;
    out.model = Model(std::move(layers), field<Shape>(manifest, "input_shape"), field<std::size_t>(manifest, "time_steps"));
    out.meta = manifest.value("meta", json::object());
    return out;
}

} // namespace bitfault
