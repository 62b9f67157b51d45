#include "scenetok/param_store.hpp"

#include <fstream>

#include <json.hpp>

#include "scenetok/rng.hpp"

namespace scenetok {

using nlohmann::json;

const char* init_scheme_name(InitScheme s) {
    switch (s) {
        case InitScheme::zeros: return "zeros";
        case InitScheme::ones: return "ones";
        case InitScheme::uniform_fan_in: return "uniform_fan_in";
        case InitScheme::normal_002: return "normal_002";
        case InitScheme::explicit_value: return "explicit";
    }
    return "unknown";
}

InitScheme init_scheme_from_name(const std::string& s) {
    if (s == "zeros") return InitScheme::zeros;
    if (s == "ones") return InitScheme::ones;
    if (s == "uniform_fan_in") return InitScheme::uniform_fan_in;
    if (s == "normal_002") return InitScheme::normal_002;
    if (s == "explicit") return InitScheme::explicit_value;
    throw TensorError("unknown init scheme: " + s);
}

void ParamStore::init_entry(const std::string& name, Entry& e) {
    if (e.scheme == InitScheme::explicit_value) return;
    rng::SplitMix sm(rng::mix(base_seed_, rng::fnv1a(name)));
    switch (e.scheme) {
        case InitScheme::zeros:
            for (double& x : e.value.raw()) x = 0.0;
            break;
        case InitScheme::ones:
            for (double& x : e.value.raw()) x = 1.0;
            break;
        case InitScheme::uniform_fan_in: {
            if (e.fan_in == 0) throw TensorError("uniform_fan_in requires fan_in > 0 for " + name);
            const double bound = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
            for (double& x : e.value.raw()) x = (2.0 * sm.next_double() - 1.0) * bound;
            break;
        }
        case InitScheme::normal_002:
            for (double& x : e.value.raw()) x = 0.02 * sm.next_normal();
            break;
        case InitScheme::explicit_value:
            break;
    }
}

void ParamStore::add(const std::string& name, Shape shape, InitScheme scheme, std::size_t fan_in) {
    if (entries_.count(name)) throw TensorError("parameter already registered: " + name);
    Entry e;
    e.value = Tensor(std::move(shape));
    e.scheme = scheme;
    e.fan_in = fan_in;
    init_entry(name, e);
    entries_.emplace(name, std::move(e));
}

void ParamStore::add_tensor(const std::string& name, Tensor t) {
    if (entries_.count(name)) throw TensorError("parameter already registered: " + name);
    t.require_finite("ParamStore::add_tensor");
    Entry e;
    e.value = std::move(t);
    e.scheme = InitScheme::explicit_value;
    entries_.emplace(name, std::move(e));
}

Tensor& ParamStore::tensor(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw TensorError("unknown parameter: " + name);
    return it->second.value;
}

const Tensor& ParamStore::tensor(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw TensorError("unknown parameter: " + name);
    return it->second.value;
}

Var ParamStore::var(const std::string& name) {
    auto it = live_.find(name);
    if (it != live_.end()) return Var(it->second);
    Var v = Var::leaf(tensor(name));
    live_[name] = v.node();
    return v;
}

void ParamStore::begin_graph() { live_.clear(); }

Tensor ParamStore::grad(const std::string& name) const {
    auto it = live_.find(name);
    if (it == live_.end()) return Tensor(tensor(name).shape());
    if (!it->second->grad_allocated) return Tensor(it->second->value.shape());
    return it->second->grad;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

std::size_t ParamStore::total_coords() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.value.size();
    return n;
}

void ParamStore::reinitialize() {
    for (auto& [name, e] : entries_) init_entry(name, e);
    live_.clear();
}

void ParamStore::save(const std::filesystem::path& path) const {
    json j;
    j["version"] = 1;
    j["base_seed"] = base_seed_;
    json tensors = json::object();
    for (const auto& [name, e] : entries_) {
        json entry;
        entry["shape"] = e.value.shape();
        entry["data"] = e.value.raw();
        entry["scheme"] = init_scheme_name(e.scheme);
        if (e.fan_in > 0) entry["fan_in"] = e.fan_in;
        tensors[name] = std::move(entry);
    }
    j["tensors"] = std::move(tensors);
    std::ofstream os(path);
    if (!os) throw TensorError("cannot open for write: " + path.string());
    os << j.dump(1, '\t') << '\n';
    if (!os) throw TensorError("write failed: " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw TensorError("cannot open: " + path.string());
    json j = json::parse(is);
    if (!j.contains("version") || j["version"].get<int>() != 1) {
        throw TensorError("unsupported checkpoint version in " + path.string());
    }
    ParamStore ps(j.value("base_seed", std::uint64_t{0}));
    for (const auto& [name, entry] : j.at("tensors").items()) {
        Shape shape = entry.at("shape").get<Shape>();
        std::vector<double> data = entry.at("data").get<std::vector<double>>();
        Entry e;
        e.value = Tensor(std::move(shape), std::move(data));
        e.scheme = init_scheme_from_name(entry.value("scheme", std::string("explicit")));
        e.fan_in = entry.value("fan_in", std::size_t{0});
        ps.entries_.emplace(name, std::move(e));
    }
    return ps;
}

void add_attention_params(ParamStore& ps, const std::string& prefix, std::size_t d) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
        ps.add(prefix + "." + w, {d, d}, InitScheme::uniform_fan_in, d);
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
        ps.add(prefix + "." + b, {d}, InitScheme::zeros);
    }
}

AttentionParams attention_vars(ParamStore& ps, const std::string& prefix) {
    AttentionParams p;
    p.wq = ps.var(prefix + ".wq");
    p.bq = ps.var(prefix + ".bq");
    p.wk = ps.var(prefix + ".wk");
    p.bk = ps.var(prefix + ".bk");
    p.wv = ps.var(prefix + ".wv");
    p.bv = ps.var(prefix + ".bv");
    p.wo = ps.var(prefix + ".wo");
    p.bo = ps.var(prefix + ".bo");
    return p;
}

void add_mlp_params(ParamStore& ps, const std::string& prefix, std::size_t d_in, std::size_t d_hidden,
                    std::size_t d_out) {
    ps.add(prefix + ".w1", {d_in, d_hidden}, InitScheme::uniform_fan_in, d_in);
    ps.add(prefix + ".b1", {d_hidden}, InitScheme::zeros);
    ps.add(prefix + ".ln_g", {d_hidden}, InitScheme::ones);
    ps.add(prefix + ".ln_b", {d_hidden}, InitScheme::zeros);
    ps.add(prefix + ".w2", {d_hidden, d_out}, InitScheme::uniform_fan_in, d_hidden);
    ps.add(prefix + ".b2", {d_out}, InitScheme::zeros);
}

Var mlp_forward(ParamStore& ps, const std::string& prefix, const Var& x) {
    Var h = add(matmul(x, ps.var(prefix + ".w1")), ps.var(prefix + ".b1"));
    h = layer_norm(h, ps.var(prefix + ".ln_g"), ps.var(prefix + ".ln_b"));
    h = gelu(h);
    return add(matmul(h, ps.var(prefix + ".w2")), ps.var(prefix + ".b2"));
}

}  // namespace scenetok
