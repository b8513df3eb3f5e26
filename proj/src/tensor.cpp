#include "tabgen/tensor.hpp"

#include <algorithm>

#include "tabgen/error.hpp"
#include "tabgen/kernels/kernels.hpp"

namespace tabgen {

TensorRef ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw ValidationError("duplicate tensor name: " + name);
    TensorRef t{name, values_.size(), rows, cols};
    values_.resize(values_.size() + t.size(), 0.0);
    grads_.resize(values_.size(), 0.0);
    index_[name] = tensors_.size();
    tensors_.push_back(t);
    return t;
}

const TensorRef& ParamStore::ref(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown tensor name: " + name);
    return tensors_[it->second];
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void Adam::begin_step() {
    ++t_;
    b1t_ *= cfg_.beta1;
    b2t_ *= cfg_.beta2;
}

void Adam::update(double* params, const double* grads, std::size_t offset, std::size_t n) {
    kern::ops().adam_step(n, params, grads, m_.data() + offset, v_.data() + offset, cfg_.lr,
                          cfg_.beta1, cfg_.beta2, cfg_.eps, b1t_, b2t_);
}

}  // namespace tabgen
