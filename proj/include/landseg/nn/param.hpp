#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "landseg/ad/graph.hpp"
#include "landseg/core/rng.hpp"
#include "landseg/core/tensor.hpp"

namespace landseg::nn {

struct Parameter {
    std::string name;
    TensorD value;
    TensorD grad;
    bool trainable = true;

    void zero_grad() { grad.data.setZero(); }
};

// Owning collection with stable addresses and name lookup. Module parameters
// are namespaced by dotted prefixes ("afm.", "decoder.", ...), which is what
// the optimizer's learning-rate policy and the checkpoint sections key on.
class ParamSet {
public:
    Parameter& add(std::string name, TensorD init, bool trainable = true) {
        if (index_.count(name)) throw ValidationError("parameter already exists: " + name);
        store_.push_back(Parameter{name, std::move(init), TensorD{}, trainable});
        Parameter& p = store_.back();
        p.grad = TensorD(p.value.shape);
        index_[p.name] = &p;
        return p;
    }

    Parameter& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValidationError("no such parameter: " + name);
        return *it->second;
    }
    const Parameter& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValidationError("no such parameter: " + name);
        return *it->second;
    }
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Parameter*> all() {
        std::vector<Parameter*> out;
        out.reserve(store_.size());
        for (auto& p : store_) out.push_back(&p);
        return out;
    }
    std::vector<const Parameter*> all() const {
        std::vector<const Parameter*> out;
        out.reserve(store_.size());
        for (const auto& p : store_) out.push_back(&p);
        return out;
    }

    size_t size() const { return store_.size(); }

private:
    std::deque<Parameter> store_;
    std::map<std::string, Parameter*> index_;
};

// FNV-1a over parameter names and raw value bytes; bit-stable across runs.
inline uint64_t params_checksum(const std::vector<const Parameter*>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const Parameter* p : params) {
        mix_bytes(p->name.data(), p->name.size());
        mix_bytes(p->value.data.data(), static_cast<size_t>(p->value.numel()) * sizeof(double));
    }
    return h;
}

inline uint64_t params_checksum(const std::vector<Parameter*>& params) {
    std::vector<const Parameter*> c(params.begin(), params.end());
    return params_checksum(c);
}

// Ties module forwards to a tape: binds each Parameter to a graph leaf once
// per pass (so shared parameters alias a single node) and copies node
// gradients back out after backward().
class Binder {
public:
    explicit Binder(ad::Graph& g) : g_(g) {}

    ad::Graph& graph() { return g_; }

    ad::Var operator()(Parameter& p) {
        auto it = bound_.find(&p);
        if (it != bound_.end()) return it->second;
        ad::Var v = g_.leaf(p.value, p.trainable);
        bound_[&p] = v;
        return v;
    }

    ad::Var constant(TensorD v) { return g_.constant(std::move(v)); }

    // Accumulates tape gradients into Parameter::grad. Returns the parameters
    // that actually received gradient in this pass.
    std::vector<Parameter*> harvest() {
        std::vector<Parameter*> touched;
        for (auto& [p, v] : bound_) {
            if (!p->trainable || !g_.has_grad(v)) continue;
            p->grad.data += g_.grad(v).data;
            touched.push_back(p);
        }
        return touched;
    }

private:
    ad::Graph& g_;
    std::map<Parameter*, ad::Var> bound_;
};

// Common initializers.
inline TensorD normal_init(std::vector<int> shape, double stddev, Rng& rng) {
    TensorD t(std::move(shape));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t(i) = rng.normal(0.0, stddev);
    return t;
}

inline TensorD xavier_init(std::vector<int> shape, Eigen::Index fan_in, Eigen::Index fan_out,
                           Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    return normal_init(std::move(shape), stddev, rng);
}

}  // namespace landseg::nn
