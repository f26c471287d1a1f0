#ifndef FEWREC_PARAMS_HPP
#define FEWREC_PARAMS_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fewrec/tensor.hpp"

namespace fewrec {

// One named parameter (or non-trainable buffer, e.g. batch-norm running stats).
struct Param {
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

// Hierarchically named parameter set. Names and shapes are the contractual
// part of the checkpoint format; iteration order is the sorted name order,
// which keeps optimizer walks and serialization deterministic.
class ParamStore {
public:
    Param& create(const std::string& name, std::vector<int> shape, bool trainable = true);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    void remove(const std::string& name);

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

    void zero_grad();
    // Restrict the trainable set to names matching `predicate`.
    void set_trainable(const std::function<bool(const std::string&)>& predicate);

    std::map<std::string, Param>& all() { return params_; }
    const std::map<std::string, Param>& all() const { return params_; }

private:
    std::map<std::string, Param> params_;
};

}  // namespace fewrec

#endif
