#include "fewrec/params.hpp"

namespace fewrec {

Param& ParamStore::create(const std::string& name, std::vector<int> shape, bool trainable) {
    if (params_.count(name)) {
        throw ConfigError("ParamStore: duplicate parameter name '" + name + "'");
    }
    Param p;
    p.value = Tensor(shape);
    p.grad = Tensor(shape);
    p.trainable = trainable;
    auto [it, ok] = params_.emplace(name, std::move(p));
    (void)ok;
    return it->second;
}

Param& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ConfigError("ParamStore: unknown parameter '" + name + "'");
    }
    return it->second;
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ConfigError("ParamStore: unknown parameter '" + name + "'");
    }
    return it->second;
}

void ParamStore::remove(const std::string& name) {
    if (!params_.erase(name)) {
        throw ConfigError("ParamStore: cannot remove unknown parameter '" + name + "'");
    }
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : params_) {
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [_, p] : params_) p.grad.zero();
}

void ParamStore::set_trainable(const std::function<bool(const std::string&)>& predicate) {
    for (auto& [name, p] : params_) p.trainable = predicate(name);
}

}  // namespace fewrec
