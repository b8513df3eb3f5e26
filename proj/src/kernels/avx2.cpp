// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma; only reachable
// after the runtime CPU check in dispatch.cpp. Transcendental kernels
// (silu) stay scalar: they are exp-bound and the table shares the
// reference implementation for them.

#include "tabgen/kernels/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

namespace tabgen::kern {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double v_dot(std::size_t n, const double* a, const double* b) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void v_axpy(std::size_t n, double alpha, const double* x, double* y) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void v_scale(std::size_t n, double alpha, double* x) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

double v_sum(std::size_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double v_sumsq(std::size_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

// 4x8 register-blocked panel kernel; remainders fall back to narrower loops.
void v_matmul_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* b, double* c, double beta) {
    auto prep_row = [&](double* crow) {
        if (beta == 0.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        } else if (beta != 1.0) {
            v_scale(n, beta, crow);
        }
    };
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        for (std::size_t r = 0; r < 4; ++r) prep_row(c + (i + r) * n);
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc[4][2];
            for (std::size_t r = 0; r < 4; ++r) {
                acc[r][0] = _mm256_loadu_pd(c + (i + r) * n + j);
                acc[r][1] = _mm256_loadu_pd(c + (i + r) * n + j + 4);
            }
            for (std::size_t p = 0; p < k; ++p) {
                __m256d b0 = _mm256_loadu_pd(b + p * n + j);
                __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
                for (std::size_t r = 0; r < 4; ++r) {
                    __m256d av = _mm256_set1_pd(a[(i + r) * k + p]);
                    acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
                }
            }
            for (std::size_t r = 0; r < 4; ++r) {
                _mm256_storeu_pd(c + (i + r) * n + j, acc[r][0]);
                _mm256_storeu_pd(c + (i + r) * n + j + 4, acc[r][1]);
            }
        }
        if (j < n) {
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = b + p * n;
                for (std::size_t r = 0; r < 4; ++r) {
                    double av = a[(i + r) * k + p];
                    double* crow = c + (i + r) * n;
                    for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
                }
            }
        }
    }
    for (; i < m; ++i) {
        double* crow = c + i * n;
        prep_row(crow);
        for (std::size_t p = 0; p < k; ++p) v_axpy(n, a[i * k + p], b + p * n, crow);
    }
}

void v_matmul_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* bt, double* c, double beta) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = v_dot(k, arow, bt + j * k);
            c[i * n + j] = beta * c[i * n + j] + acc;
        }
    }
}

void v_matmul_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* b, double* c, double beta) {
    if (beta == 0.0) {
        for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    } else if (beta != 1.0) {
        v_scale(m * n, beta, c);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) v_axpy(n, arow[i], brow, c + i * n);
    }
}

void v_adam_step(std::size_t n, double* p, const double* g, double* m, double* v,
                 double lr, double beta1, double beta2, double eps, double b1t,
                 double b2t) {
    __m256d vb1 = _mm256_set1_pd(beta1), vb1c = _mm256_set1_pd(1.0 - beta1);
    __m256d vb2 = _mm256_set1_pd(beta2), vb2c = _mm256_set1_pd(1.0 - beta2);
    __m256d vmc = _mm256_set1_pd(1.0 / (1.0 - b1t));
    __m256d vvc = _mm256_set1_pd(1.0 / (1.0 - b2t));
    __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_fmadd_pd(vb1c, gi, _mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)));
        __m256d vi = _mm256_fmadd_pd(vb2c, _mm256_mul_pd(gi, gi),
                                     _mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, vvc)), veps);
        __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, _mm256_mul_pd(mi, vmc)), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    double mc = 1.0 / (1.0 - b1t), vc = 1.0 / (1.0 - b2t);
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] * mc) / (std::sqrt(v[i] * vc) + eps);
    }
}

}  // namespace

const Ops* avx2_ops() {
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
    static const Ops table = {v_dot,
                              v_axpy,
                              v_scale,
                              v_sum,
                              v_sumsq,
                              v_matmul_nn,
                              v_matmul_nt,
                              v_matmul_tn,
                              scalar_ops().silu,
                              scalar_ops().silu_grad,
                              v_adam_step};
    return &table;
}

}  // namespace tabgen::kern

#else

namespace tabgen::kern {
const Ops* avx2_ops() { return nullptr; }
}  // namespace tabgen::kern

#endif
