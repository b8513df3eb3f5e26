#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace tabgen {

// A named slice of the flat parameter vector, shaped rows x cols (row-major).
struct TensorRef {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
};

// All learnable parameters in one flat vector with a parallel gradient
// buffer.  Keeping everything flat makes the optimizer, the checkpoint
// format, and finite-difference checks trivial: they all see one array.
class ParamStore {
  public:
    TensorRef add(const std::string& name, std::size_t rows, std::size_t cols);

    const TensorRef& ref(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    double* data(const TensorRef& t) { return values_.data() + t.offset; }
    const double* data(const TensorRef& t) const { return values_.data() + t.offset; }
    double* grad(const TensorRef& t) { return grads_.data() + t.offset; }
    const double* grad(const TensorRef& t) const { return grads_.data() + t.offset; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& grads() { return grads_; }
    const std::vector<double>& grads() const { return grads_; }
    const std::vector<TensorRef>& tensors() const { return tensors_; }

    std::size_t size() const { return values_.size(); }
    void zero_grad();

  private:
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<TensorRef> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Adam first/second moment buffers plus the step counter shared by all
// parameter groups updated in the same optimizer step.
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    // Advances the shared step counter; call once per optimizer step, before
    // updating the parameter groups of that step.
    void begin_step();

    // Updates params[0..n) with grads[0..n); (offset, n) addresses the slice
    // of moment buffers owned by this group.
    void update(double* params, const double* grads, std::size_t offset, std::size_t n);

    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

  private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    int64_t t_ = 0;
    double b1t_ = 1.0, b2t_ = 1.0;
};

}  // namespace tabgen
