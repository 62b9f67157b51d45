#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scenetok/autograd.hpp"
#include "scenetok/tensor.hpp"

namespace scenetok {

enum class InitScheme { zeros, ones, uniform_fan_in, normal_002, explicit_value };

const char* init_scheme_name(InitScheme s);
InitScheme init_scheme_from_name(const std::string& s);

/// Named parameter tensors with reproducible initialization. Each entry is
/// seeded by mix(base_seed, fnv1a(name)), so re-initialization with the same
/// base seed reproduces bytes. Also hands out leaf Vars for graph building
/// and retains them so gradients can be read back after backward().
class ParamStore {
public:
    explicit ParamStore(std::uint64_t base_seed = 0) : base_seed_(base_seed) {}

    void add(const std::string& name, Shape shape, InitScheme scheme, std::size_t fan_in = 0);
    void add_tensor(const std::string& name, Tensor t);  // explicit value, kept verbatim on reinitialize

    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    Tensor& tensor(const std::string& name);
    const Tensor& tensor(const std::string& name) const;

    /// Leaf node over a copy of the stored tensor. Repeated calls with the
    /// same name return the same node until begin_graph(), so a parameter
    /// used several times in one graph accumulates its full gradient in one
    /// place.
    Var var(const std::string& name);

    /// Drops all live leaves; the next var(name) re-reads the stored tensor.
    /// Call before rebuilding a graph whose parameter values may have changed.
    void begin_graph();

    /// Gradient of the live leaf for `name`; zeros if the parameter was
    /// never used in the current graph or never received gradient.
    Tensor grad(const std::string& name) const;

    std::vector<std::string> names() const;
    std::size_t total_coords() const;
    std::uint64_t base_seed() const { return base_seed_; }

    void reinitialize();

    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path);

private:
    struct Entry {
        Tensor value;
        InitScheme scheme = InitScheme::explicit_value;
        std::size_t fan_in = 0;
    };

    void init_entry(const std::string& name, Entry& e);

    std::uint64_t base_seed_;
    std::map<std::string, Entry> entries_;  // ordered for deterministic iteration
    std::map<std::string, NodePtr> live_;
};

/// Registers the eight tensors of one attention layer under `prefix`
/// (wq/bq/wk/bk/wv/bv/wo/bo), weights uniform_fan_in and biases zero.
void add_attention_params(ParamStore& ps, const std::string& prefix, std::size_t d);
AttentionParams attention_vars(ParamStore& ps, const std::string& prefix);

/// Registers a two-layer MLP with LayerNorm + GELU between:
/// x -> w1/b1 -> layer_norm(ln_g, ln_b) -> gelu -> w2/b2.
void add_mlp_params(ParamStore& ps, const std::string& prefix, std::size_t d_in, std::size_t d_hidden,
                    std::size_t d_out);
Var mlp_forward(ParamStore& ps, const std::string& prefix, const Var& x);

}  // namespace scenetok
