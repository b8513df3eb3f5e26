#include "tabgen/kernels/kernels.hpp"

#include <cmath>

// Reference kernels. Plain loops, no manual unrolling: these are the
// ground truth the SIMD paths are equivalence-tested against.

namespace tabgen::kern {
namespace {

double s_dot(std::size_t n, const double* a, const double* b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_scale(std::size_t n, double alpha, double* x) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double s_sum(std::size_t n, const double* x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double s_sumsq(std::size_t n, const double* x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void s_matmul_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* b, double* c, double beta) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        if (beta == 0.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        } else if (beta != 1.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (std::size_t p = 0; p < k; ++p) {
            double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void s_matmul_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* bt, double* c, double beta) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = s_dot(k, arow, bt + j * k);
            c[i * n + j] = beta * c[i * n + j] + acc;
        }
    }
}

void s_matmul_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* b, double* c, double beta) {
    if (beta == 0.0) {
        for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    } else if (beta != 1.0) {
        for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double av = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void s_silu(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * sigmoid(x[i]);
}

void s_silu_grad(std::size_t n, const double* x, const double* dy, double* dx) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = sigmoid(x[i]);
        dx[i] = dy[i] * (s * (1.0 + x[i] * (1.0 - s)));
    }
}

void s_adam_step(std::size_t n, double* p, const double* g, double* m, double* v,
                 double lr, double beta1, double beta2, double eps, double b1t,
                 double b2t) {
    double mc = 1.0 / (1.0 - b1t);
    double vc = 1.0 / (1.0 - b2t);
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] * mc) / (std::sqrt(v[i] * vc) + eps);
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops table = {s_dot,       s_axpy,      s_scale,     s_sum,
                              s_sumsq,     s_matmul_nn, s_matmul_nt, s_matmul_tn,
                              s_silu,      s_silu_grad, s_adam_step};
    return table;
}

}  // namespace tabgen::kern
