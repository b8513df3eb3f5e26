#pragma once

#include <cstddef>
#include <string>

namespace tabgen::kern {

// Double-precision kernels behind the hot loops (denoiser GEMMs, optimizer
// updates, reductions). Each operation has a scalar reference implementation
// and an AVX2 variant; the active table is picked once at startup from CPU
// capabilities, overridable with TABGEN_ISA=scalar|avx2.
struct Ops {
    double (*dot)(std::size_t n, const double* a, const double* b);
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    void (*scale)(std::size_t n, double alpha, double* x);
    double (*sum)(std::size_t n, const double* x);
    double (*sumsq)(std::size_t n, const double* x);

    // C(m x n) = A(m x k) * B(k x n) + beta * C, all row-major.
    void (*matmul_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                      const double* b, double* c, double beta);
    // C(m x n) = A(m x k) * B^T + beta * C, with B stored as (n x k) row-major.
    void (*matmul_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                      const double* bt, double* c, double beta);
    // C(m x n) = A^T * B + beta * C, with A stored as (k x m) row-major.
    void (*matmul_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                      const double* b, double* c, double beta);

    void (*silu)(std::size_t n, const double* x, double* y);
    // dx = dy * silu'(x)
    void (*silu_grad)(std::size_t n, const double* x, const double* dy, double* dx);

    // One Adam step with bias correction; b1t/b2t are beta1^t, beta2^t.
    void (*adam_step)(std::size_t n, double* p, const double* g, double* m, double* v,
                      double lr, double beta1, double beta2, double eps, double b1t,
                      double b2t);
};

const Ops& ops();             // active table
const Ops& scalar_ops();      // reference path, always available
const Ops* avx2_ops();        // nullptr when unsupported on this CPU/build
const std::string& isa_name();

}  // namespace tabgen::kern
