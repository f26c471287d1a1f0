#ifndef FEWREC_TENSOR_HPP
#define FEWREC_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fewrec/errors.hpp"

namespace fewrec {

// Dense row-major double tensor. Small and deliberately boring; all heavy
// lifting happens in the layer kernels.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), 0.0);
    }
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != numel_of(shape_)) {
            throw ConfigError("Tensor: data size does not match shape");
        }
    }

    static std::size_t numel_of(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ConfigError("Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    const std::vector<int>& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace fewrec

#endif
