#include "bitfault/config.hpp"

#include "bitfault/error.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace bitfault {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, path + ": " + msg);
}

const char* type_name(const json& j) { return j.type_name(); }

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be rejected.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) {
            bad(path_, std::string("expected an object, got ") + type_name(j));
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    std::string at(const char* key) const { return path_ + "." + key; }

    const json* find(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string str(const char* key, std::optional<std::string> def = std::nullopt) {
        const json* v = find(key);
        if (v == nullptr) {
            return def ? *def : missing(key);
        }
        if (!v->is_string()) {
            bad(at(key), std::string("expected a string, got ") + type_name(*v));
        }
        return v->get<std::string>();
    }

    std::uint64_t u64(const char* key, std::uint64_t def) {
        const json* v = find(key);
        return v == nullptr ? def : as_u64(*v, at(key));
    }

    double num(const char* key, double def) {
        const json* v = find(key);
        if (v == nullptr) {
            return def;
        }
        if (!v->is_number()) {
            bad(at(key), std::string("expected a number, got ") + type_name(*v));
        }
        return v->get<double>();
    }

    bool boolean(const char* key, bool def) {
        const json* v = find(key);
        if (v == nullptr) {
            return def;
        }
        if (!v->is_boolean()) {
            bad(at(key), std::string("expected true or false, got ") + type_name(*v));
        }
        return v->get<bool>();
    }

    const json& array(const char* key) {
        const json* v = find(key);
        if (v == nullptr) {
            missing(key);
        }
        if (!v->is_array()) {
            bad(at(key), std::string("expected an array, got ") + type_name(*v));
        }
        return *v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                bad(path_ + "." + it.key(), "unknown key");
            }
        }
    }

    static std::uint64_t as_u64(const json& v, const std::string& path) {
        if (!v.is_number_unsigned()) {
            bad(path, std::string("expected a non-negative integer, got ") +
                          (v.is_number() ? v.dump() : std::string(type_name(v))));
        }
        return v.get<std::uint64_t>();
    }

    const std::string& path() const { return path_; }

private:
    [[noreturn]] std::string missing(const char* key) const { bad(at(key), "required"); }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
auto enum_value(const std::string& path, const std::string& text, F parse) {
    try {
        return parse(text);
    } catch (const Error& e) {
        bad(path, e.detail());
    }
}

std::vector<std::uint64_t> u64_list(const json& arr, const std::string& path) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back(Obj::as_u64(arr[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::size_t positive(std::uint64_t v, const std::string& path) {
    if (v == 0) {
        bad(path, "must be positive");
    }
    return static_cast<std::size_t>(v);
}

TrainOptions parse_train(const json& j, const std::string& path, const TrainOptions& def) {
    Obj o(j, path);
    TrainOptions t = def;
    t.epochs = static_cast<std::size_t>(o.u64("epochs", def.epochs));
    t.learning_rate = static_cast<float>(o.num("learning_rate", def.learning_rate));
    t.batch_size = positive(o.u64("batch_size", def.batch_size), o.at("batch_size"));
    t.seed = o.u64("seed", def.seed);
    t.weight_decay = static_cast<float>(o.num("weight_decay", def.weight_decay));
    if (!(t.learning_rate >= 0.0f)) {
        bad(o.at("learning_rate"), "must be >= 0");
    }
    if (!(t.weight_decay >= 0.0f)) {
        bad(o.at("weight_decay"), "must be >= 0");
    }
    o.finish();
    return t;
}

DatasetSection parse_dataset(const json& j, std::uint64_t seed) {
    Obj o(j, "$.dataset");
    DatasetSection d;
    d.zoo = o.str("zoo");
    d.test_fraction = o.num("test_fraction", 0.2);
    if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) {
        bad(o.at("test_fraction"), "must lie in (0, 1)");
    }
    if (d.zoo == "blobs") {
        zoo::BlobsSpec& b = d.blobs;
        b.n = positive(o.u64("n", b.n), o.at("n"));
        b.d = positive(o.u64("d", b.d), o.at("d"));
        b.classes = positive(o.u64("classes", b.classes), o.at("classes"));
        b.spread = o.num("spread", b.spread);
        b.seed = o.u64("seed", seed);
        if (!(b.spread >= 0.0)) {
            bad(o.at("spread"), "must be >= 0");
        }
    } else if (d.zoo == "events") {
        zoo::EventsSpec& e = d.events;
        e.n = positive(o.u64("n", e.n), o.at("n"));
        e.time_steps = positive(o.u64("time_steps", e.time_steps), o.at("time_steps"));
        e.d = positive(o.u64("d", e.d), o.at("d"));
        e.classes = positive(o.u64("classes", e.classes), o.at("classes"));
        e.rate = o.num("rate", e.rate);
        e.noise_rate = o.num("noise_rate", e.noise_rate);
        e.seed = o.u64("seed", seed);
        if (!(e.rate > 0.0 && e.rate <= 1.0)) {
            bad(o.at("rate"), "must lie in (0, 1]");
        }
        if (!(e.noise_rate >= 0.0 && e.noise_rate < 1.0)) {
            bad(o.at("noise_rate"), "must lie in [0, 1)");
        }
    } else {
        bad(o.at("zoo"), "unknown dataset '" + d.zoo + "' (blobs | events)");
    }
    o.finish();
    return d;
}

ModelSection parse_model(const json& j, std::uint64_t seed) {
    Obj o(j, "$.model");
    ModelSection m;
    if (o.has("path")) {
        m.path = o.str("path");
        o.finish();
        return m;
    }
    m.zoo = o.str("zoo");
    if (m.zoo != "mlp" && m.zoo != "cnn" && m.zoo != "snn") {
        bad(o.at("zoo"), "unknown model '" + m.zoo + "' (mlp | cnn | snn)");
    }
    if (const json* h = o.find("hidden")) {
        if (!h->is_array() || h->empty()) {
            bad(o.at("hidden"), "expected a non-empty array of layer widths");
        }
        m.hidden.clear();
        for (std::uint64_t w : u64_list(*h, o.at("hidden"))) {
            m.hidden.push_back(positive(w, o.at("hidden")));
        }
    }
    m.cnn_channels = positive(o.u64("cnn_channels", m.cnn_channels), o.at("cnn_channels"));
    m.model_seed = o.u64("model_seed", seed);
    TrainOptions def = zoo::default_train_options(m.zoo);
    def.seed = seed;
    if (const json* t = o.find("train")) {
        m.train = parse_train(*t, o.at("train"), def);
    } else {
        m.train = def;
    }
    o.finish();
    return m;
}

Fault parse_fault(const json& j, const std::string& path) {
    Obj o(j, path);
    Fault f;
    f.layer_name = o.str("layer");
    f.target = enum_value(o.at("target"), o.str("target"), parse_target);
    f.site = enum_value(o.at("site"), o.str("site", "dense"), parse_site);
    f.kind = enum_value(o.at("kind"), o.str("kind", "bit_flip"), parse_fault_kind);
    if (!site_valid_for(f.site, f.target)) {
        bad(o.at("site"), std::string(to_string(f.site)) + " site needs an output target");
    }
    const json& elements = o.array("elements");
    const json& bits = o.array("bits");
    if (elements.empty()) {
        bad(o.at("elements"), "must name at least one element");
    }
    if (elements.size() != bits.size()) {
        bad(o.at("bits"), "needs one bit list per element");
    }
    for (std::size_t i = 0; i < elements.size(); ++i) {
        const std::string ep = o.at("elements") + "[" + std::to_string(i) + "]";
        const std::string bp = o.at("bits") + "[" + std::to_string(i) + "]";
        if (!elements[i].is_array()) {
            bad(ep, "expected a coordinate array");
        }
        if (!bits[i].is_array() || bits[i].empty()) {
            bad(bp, "expected a non-empty array of bit positions");
        }
        Coord c;
        for (std::uint64_t v : u64_list(elements[i], ep)) {
            c.push_back(static_cast<std::size_t>(v));
        }
        std::vector<int> b;
        for (std::uint64_t v : u64_list(bits[i], bp)) {
            if (v > 31) {
                bad(bp, "bit positions lie in [0, 31]");
            }
            b.push_back(static_cast<int>(v));
        }
        f.element_indices.push_back(std::move(c));
        f.bit_positions.push_back(std::move(b));
    }
    o.finish();
    return f;
}

Monitor parse_monitor(const json& j, const std::string& path) {
    Obj o(j, path);
    Monitor m;
    m.layer_name = o.str("layer");
    m.target = enum_value(o.at("target"), o.str("target", "output"), parse_target);
    m.capture = enum_value(o.at("capture"), o.str("capture", "summary"), parse_capture);
    o.finish();
    return m;
}

std::vector<Injection> parse_injections(const json& arr) {
    if (!arr.is_array()) {
        bad("$.injections", "expected an array");
    }
    std::vector<Injection> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "$.injections[" + std::to_string(i) + "]";
        Obj o(arr[i], p);
        const bool is_fault = o.has("fault");
        const bool is_monitor = o.has("monitor");
        if (is_fault == is_monitor) {
            bad(p, "expected exactly one of 'fault' or 'monitor'");
        }
        if (is_fault) {
            out.emplace_back(parse_fault(*o.find("fault"), o.at("fault")));
        } else {
            out.emplace_back(parse_monitor(*o.find("monitor"), o.at("monitor")));
        }
        o.finish();
    }
    return out;
}

SweepConfig parse_sweep(const json& j, std::uint64_t seed) {
    Obj o(j, "$.sweep");
    SweepConfig s;
    s.target = enum_value(o.at("target"), o.str("target", "weight"), parse_target);
    s.site = enum_value(o.at("site"), o.str("site", "dense"), parse_site);
    s.kind = enum_value(o.at("kind"), o.str("kind", "bit_flip"), parse_fault_kind);
    if (!site_valid_for(s.site, s.target)) {
        bad(o.at("site"), std::string(to_string(s.site)) + " site needs an output target");
    }
    const std::uint64_t lo = o.u64("bit_lo", 0);
    const std::uint64_t hi = o.u64("bit_hi", 31);
    if (lo > hi || hi > 31) {
        bad(o.at("bit_hi"), "bit range must satisfy 0 <= bit_lo <= bit_hi <= 31");
    }
    s.bit_lo = static_cast<int>(lo);
    s.bit_hi = static_cast<int>(hi);
    if (const json* r = o.find("rates")) {
        if (!r->is_array() || r->empty()) {
            bad(o.at("rates"), "expected a non-empty array of rates");
        }
        s.rates.clear();
        for (std::size_t i = 0; i < r->size(); ++i) {
            const json& v = (*r)[i];
            const std::string p = o.at("rates") + "[" + std::to_string(i) + "]";
            if (!v.is_number() || !(v.get<double>() >= 0.0 && v.get<double>() <= 1.0)) {
                bad(p, "rates lie in [0, 1]");
            }
            s.rates.push_back(v.get<double>());
        }
    }
    s.include_control = o.boolean("include_control", false);
    if (const json* l = o.find("layers")) {
        if (!l->is_array()) {
            bad(o.at("layers"), "expected an array of layer names");
        }
        for (std::size_t i = 0; i < l->size(); ++i) {
            if (!(*l)[i].is_string()) {
                bad(o.at("layers") + "[" + std::to_string(i) + "]", "expected a layer name");
            }
            s.layers.push_back((*l)[i].get<std::string>());
        }
    }
    if (const json* sd = o.find("seeds")) {
        if (!sd->is_array() || sd->empty()) {
            bad(o.at("seeds"), "expected a non-empty array of seeds");
        }
        s.seeds = u64_list(*sd, o.at("seeds"));
    } else {
        s.seeds = {seed, seed + 1, seed + 2};
    }
    if (const json* m = o.find("monitors")) {
        if (!m->is_array()) {
            bad(o.at("monitors"), "expected an array");
        }
        for (std::size_t i = 0; i < m->size(); ++i) {
            s.monitors.push_back(parse_monitor((*m)[i], o.at("monitors") + "[" + std::to_string(i) + "]"));
        }
    }
    s.record_trace = o.boolean("record_trace", true);
    o.finish();
    return s;
}

BenchConfig parse_bench(const json& j, std::uint64_t seed) {
    Obj o(j, "$.bench");
    BenchConfig b;
    if (const json* k = o.find("fault_counts")) {
        if (!k->is_array() || k->empty()) {
            bad(o.at("fault_counts"), "expected a non-empty array of counts");
        }
        b.fault_counts.clear();
        for (std::uint64_t v : u64_list(*k, o.at("fault_counts"))) {
            b.fault_counts.push_back(static_cast<std::size_t>(v));
        }
    }
    b.repetitions = positive(o.u64("repetitions", b.repetitions), o.at("repetitions"));
    b.kind = enum_value(o.at("kind"), o.str("kind", "bit_flip"), parse_fault_kind);
    b.seed = o.u64("seed", seed);
    o.finish();
    return b;
}

} // namespace

RunConfig parse_config(const json& doc, const Overrides& ov) {
    Obj o(doc, "$");
    RunConfig c;
    c.seed = ov.seed ? *ov.seed : o.u64("seed", 1);
    if (ov.seed) {
        o.find("seed");
    }
    if (o.has("store")) {
        c.store = o.str("store");
    } else {
        o.find("store");
    }
    if (ov.store) {
        c.store = ov.store;
    }
    c.out = o.str("out", "out");
    if (ov.out) {
        c.out = *ov.out;
    }
    c.workers = positive(o.u64("workers", 1), o.at("workers"));
    if (ov.workers) {
        c.workers = positive(*ov.workers, "--workers");
    }
    if (const json* m = o.find("model")) {
        c.model = parse_model(*m, c.seed);
    }
    if (const json* d = o.find("dataset")) {
        c.dataset = parse_dataset(*d, c.seed);
    }
    if (const json* i = o.find("injections")) {
        c.injections = parse_injections(*i);
    }
    if (const json* s = o.find("sweep")) {
        c.sweep = parse_sweep(*s, c.seed);
        c.sweep->workers = c.workers;
    }
    if (const json* b = o.find("bench")) {
        c.bench = parse_bench(*b, c.seed);
    }
    o.finish();
    if (c.model && !c.model->path && c.dataset) {
        scenario_spec(*c.model, *c.dataset); // pairing check
    }
    return c;
}

json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        bad("$", "cannot read config file " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        bad("$", std::string("invalid JSON: ") + e.what());
    }
}

zoo::ScenarioSpec scenario_spec(const ModelSection& m, const DatasetSection& d) {
    const bool wants_events = m.zoo == "snn";
    if (wants_events != (d.zoo == "events")) {
        bad("$.dataset.zoo", "model '" + m.zoo + "' needs the " + (wants_events ? "events" : "blobs") + " dataset");
    }
    zoo::ScenarioSpec s;
    s.model_id = m.zoo;
    s.blobs = d.blobs;
    s.events = d.events;
    s.hidden = m.hidden;
    s.cnn_channels = m.cnn_channels;
    s.test_fraction = d.test_fraction;
    s.model_seed = m.model_seed;
    s.train = m.train;
    return s;
}

std::string config_hash(const json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace bitfault
