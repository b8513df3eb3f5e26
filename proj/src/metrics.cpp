#include "tabgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "tabgen/error.hpp"
#include "tabgen/kernels/kernels.hpp"
#include "tabgen/mathutil.hpp"
#include "tabgen/rng.hpp"

namespace tabgen {

namespace {

const double* num_col(const Dataset& d, std::size_t slot) {
    return d.num.data() + slot * d.rows;
}

const int32_t* cat_col(const Dataset& d, std::size_t slot) {
    return d.cat.data() + slot * d.rows;
}

std::vector<double> num_vec(const Dataset& d, std::size_t slot) {
    const double* p = num_col(d, slot);
    return std::vector<double>(p, p + d.rows);
}

std::vector<int32_t> cat_vec(const Dataset& d, std::size_t slot) {
    const int32_t* p = cat_col(d, slot);
    return std::vector<int32_t>(p, p + d.rows);
}

void check_match(const Dataset& real, const Dataset& synth, const char* what) {
    if (real.schema != synth.schema)
        throw ValidationError(std::string(what) + ": real and synthetic schemas differ");
    if (real.rows == 0 || synth.rows == 0)
        throw ValidationError(std::string(what) + ": empty table");
}

std::vector<double> frequencies(const std::vector<int32_t>& codes, std::size_t vocabulary,
                                const char* what) {
    std::vector<double> f(vocabulary, 0.0);
    for (int32_t c : codes) {
        if (c < 0 || static_cast<std::size_t>(c) >= vocabulary)
            throw ValidationError(std::string(what) + ": category code " + std::to_string(c) +
                                  " outside vocabulary of size " + std::to_string(vocabulary));
        f[static_cast<std::size_t>(c)] += 1.0;
    }
    for (double& v : f) v /= static_cast<double>(codes.size());
    return f;
}

}  // namespace

double kst(const std::vector<double>& real, const std::vector<double>& synth) {
    if (real.empty() || synth.empty()) throw ValidationError("kst: empty sample");
    std::vector<double> r = real, s = synth;
    std::sort(r.begin(), r.end());
    std::sort(s.begin(), s.end());
    const double nr = static_cast<double>(r.size());
    const double ns = static_cast<double>(s.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < r.size() && j < s.size()) {
        double v = std::min(r[i], s[j]);
        while (i < r.size() && r[i] <= v) ++i;
        while (j < s.size() && s[j] <= v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / nr - static_cast<double>(j) / ns));
    }
    return d;
}

double tvd(const std::vector<int32_t>& real, const std::vector<int32_t>& synth,
           std::size_t vocabulary) {
    if (real.empty() || synth.empty()) throw ValidationError("tvd: empty sample");
    if (vocabulary == 0) throw ValidationError("tvd: empty vocabulary");
    std::vector<double> fr = frequencies(real, vocabulary, "tvd");
    std::vector<double> fs = frequencies(synth, vocabulary, "tvd");
    double d = 0.0;
    for (std::size_t c = 0; c < vocabulary; ++c) d += std::fabs(fr[c] - fs[c]);
    return 0.5 * d;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
    if (x.size() != y.size() || x.empty()) throw ValidationError("pearson: size mismatch");
    if (degenerate) *degenerate = false;
    const auto& k = kern::ops();
    const std::size_t n = x.size();
    const double inv = 1.0 / static_cast<double>(n);
    double mx = k.sum(n, x.data()) * inv;
    double my = k.sum(n, y.data()) * inv;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

ShapeReport shape_error(const Dataset& real, const Dataset& synth) {
    check_match(real, synth, "shape_error");
    ShapeReport rep;
    double total = 0.0;
    for (std::size_t p = 0; p < real.schema.columns.size(); ++p) {
        const auto& col = real.schema.columns[p];
        std::size_t slot = real.schema.kind_slot(p);
        double err = (col.kind == ColumnKind::Numerical)
                         ? kst(num_vec(real, slot), num_vec(synth, slot))
                         : tvd(cat_vec(real, slot), cat_vec(synth, slot),
                               real.schema.cardinality(slot));
        rep.columns.emplace_back(col.name, err);
        total += err;
    }
    rep.average = total / static_cast<double>(rep.columns.size());
    return rep;
}

double pearson_score(const Dataset& real, const Dataset& synth, std::size_t slot_a,
                     std::size_t slot_b, std::vector<std::string>* warnings) {
    bool dr = false, ds = false;
    double rr = pearson(num_vec(real, slot_a), num_vec(real, slot_b), &dr);
    double rs = pearson(num_vec(synth, slot_a), num_vec(synth, slot_b), &ds);
    if (warnings && (dr || ds))
        warnings->push_back("pearson: zero-variance column in slot pair (" +
                            std::to_string(slot_a) + "," + std::to_string(slot_b) +
                            "); correlation taken as 0");
    return 0.5 * std::fabs(rr - rs);
}

namespace {

double joint_half_l1(const int32_t* ra, const int32_t* rb, std::size_t nr, const int32_t* sa,
                     const int32_t* sb, std::size_t ns, std::size_t va, std::size_t vb) {
    std::vector<double> jr(va * vb, 0.0), js(va * vb, 0.0);
    for (std::size_t i = 0; i < nr; ++i)
        jr[static_cast<std::size_t>(ra[i]) * vb + static_cast<std::size_t>(rb[i])] += 1.0;
    for (std::size_t i = 0; i < ns; ++i)
        js[static_cast<std::size_t>(sa[i]) * vb + static_cast<std::size_t>(sb[i])] += 1.0;
    double d = 0.0;
    for (std::size_t c = 0; c < jr.size(); ++c)
        d += std::fabs(jr[c] / static_cast<double>(nr) - js[c] / static_cast<double>(ns));
    return 0.5 * d;
}

}  // namespace

double contingency_score(const Dataset& real, const Dataset& synth, std::size_t slot_a,
                         std::size_t slot_b) {
    const std::size_t va = real.schema.cardinality(slot_a);
    const std::size_t vb = real.schema.cardinality(slot_b);
    // Re-validate codes through the frequency helper before forming joints.
    frequencies(cat_vec(real, slot_a), va, "contingency_score");
    frequencies(cat_vec(real, slot_b), vb, "contingency_score");
    frequencies(cat_vec(synth, slot_a), va, "contingency_score");
    frequencies(cat_vec(synth, slot_b), vb, "contingency_score");
    return joint_half_l1(cat_col(real, slot_a), cat_col(real, slot_b), real.rows,
                         cat_col(synth, slot_a), cat_col(synth, slot_b), synth.rows, va, vb);
}

std::vector<double> quantile_bin_edges(const std::vector<double>& values, std::size_t max_bins) {
    if (values.empty()) throw ValidationError("quantile_bin_edges: empty column");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::size_t distinct = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] != sorted[i - 1]) ++distinct;
    std::size_t bins = std::min(max_bins, distinct);
    std::vector<double> edges;
    for (std::size_t b = 1; b < bins; ++b)
        edges.push_back(
            quantile_sorted(sorted, static_cast<double>(b) / static_cast<double>(bins)));
    return edges;
}

std::vector<int32_t> apply_bins(const std::vector<double>& values,
                                const std::vector<double>& edges) {
    std::vector<int32_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        int32_t b = 0;
        for (double e : edges)
            if (values[i] > e) ++b;
        out[i] = b;
    }
    return out;
}

TrendReport trend_error(const Dataset& real, const Dataset& synth) {
    check_match(real, synth, "trend_error");
    const auto& cols = real.schema.columns;
    if (cols.size() < 2) throw ValidationError("trend_error: need at least two columns");

    // Bin every numerical column once, with edges from the real data.
    std::vector<std::vector<int32_t>> rbin(cols.size()), sbin(cols.size());
    std::vector<std::size_t> bin_vocab(cols.size(), 0);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].kind != ColumnKind::Numerical) continue;
        std::size_t slot = real.schema.kind_slot(c);
        std::vector<double> edges = quantile_bin_edges(num_vec(real, slot));
        rbin[c] = apply_bins(num_vec(real, slot), edges);
        sbin[c] = apply_bins(num_vec(synth, slot), edges);
        bin_vocab[c] = edges.size() + 1;
    }

    TrendReport rep;
    double total = 0.0;
    for (std::size_t a = 0; a < cols.size(); ++a)
        for (std::size_t b = a + 1; b < cols.size(); ++b) {
            const ColumnKind ka = cols[a].kind, kb = cols[b].kind;
            const std::size_t sa = real.schema.kind_slot(a);
            const std::size_t sb = real.schema.kind_slot(b);
            double err = 0.0;
            if (ka == ColumnKind::Numerical && kb == ColumnKind::Numerical) {
                err = pearson_score(real, synth, sa, sb, &rep.warnings);
            } else if (ka == ColumnKind::Categorical && kb == ColumnKind::Categorical) {
                err = contingency_score(real, synth, sa, sb);
            } else {
                // Mixed: the numerical side was quantile-binned above.
                const bool a_num = ka == ColumnKind::Numerical;
                const auto& ra = a_num ? rbin[a] : rbin[b];
                const auto& ss = a_num ? sbin[a] : sbin[b];
                std::size_t va = a_num ? bin_vocab[a] : bin_vocab[b];
                std::size_t cat_slot = a_num ? sb : sa;
                std::size_t vb = real.schema.cardinality(cat_slot);
                err = joint_half_l1(ra.data(), cat_col(real, cat_slot), real.rows, ss.data(),
                                    cat_col(synth, cat_slot), synth.rows, va, vb);
            }
            rep.pairs.push_back({cols[a].name, cols[b].name, err});
            total += err;
        }
    rep.average = total / static_cast<double>(rep.pairs.size());
    return rep;
}

void write_trend_heatmap(const TrendReport& trend, const TableSchema& schema,
                         std::ostream& os) {
    const std::size_t n = schema.columns.size();
    std::vector<double> m(n * n, 0.0);
    auto index_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < n; ++i)
            if (schema.columns[i].name == name) return i;
        throw ValidationError("heatmap: unknown column '" + name + "'");
    };
    for (const auto& p : trend.pairs) {
        std::size_t a = index_of(p.col_a), b = index_of(p.col_b);
        m[a * n + b] = m[b * n + a] = p.error * 100.0;
    }
    os << "column";
    for (const auto& col : schema.columns) os << ',' << col.name;
    os << '\n';
    for (std::size_t a = 0; a < n; ++a) {
        os << schema.columns[a].name;
        for (std::size_t b = 0; b < n; ++b) os << ',' << format_double(m[a * n + b]);
        os << '\n';
    }
}

namespace {

// Row distance averaged over columns: |a-b|/range for numerical, 0/1
// mismatch for categorical.
struct DcrContext {
    const Dataset* train;
    const Dataset* holdout;
    const Dataset* synth;
    std::vector<double> inv_range;  // per numerical slot
    std::size_t num_slots;
    std::size_t cat_slots;

    double row_distance(const Dataset& ref, std::size_t ref_row, std::size_t synth_row) const {
        double d = 0.0;
        for (std::size_t i = 0; i < num_slots; ++i)
            d += std::fabs(synth->num_at(i, synth_row) - ref.num_at(i, ref_row)) * inv_range[i];
        for (std::size_t j = 0; j < cat_slots; ++j)
            d += (synth->cat_at(j, synth_row) != ref.cat_at(j, ref_row)) ? 1.0 : 0.0;
        return d / static_cast<double>(num_slots + cat_slots);
    }

    double nearest(const Dataset& ref, std::size_t synth_row) const {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < ref.rows; ++r)
            best = std::min(best, row_distance(ref, r, synth_row));
        return best;
    }
};

}  // namespace

double dcr_score(const Dataset& train, const Dataset& holdout, const Dataset& synth,
                 std::size_t threads) {
    if (train.schema != synth.schema || holdout.schema != synth.schema)
        throw ValidationError("dcr_score: reference schemas do not match synthetic data");
    if (train.rows == 0 || holdout.rows == 0 || synth.rows == 0)
        throw ValidationError("dcr_score: empty table");

    DcrContext ctx;
    ctx.train = &train;
    ctx.holdout = &holdout;
    ctx.synth = &synth;
    ctx.num_slots = train.schema.num_count();
    ctx.cat_slots = train.schema.columns.size() - ctx.num_slots;
    ctx.inv_range.resize(ctx.num_slots);
    for (std::size_t i = 0; i < ctx.num_slots; ++i) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t r = 0; r < train.rows; ++r) {
            lo = std::min(lo, train.num_at(i, r));
            hi = std::max(hi, train.num_at(i, r));
        }
        for (std::size_t r = 0; r < holdout.rows; ++r) {
            lo = std::min(lo, holdout.num_at(i, r));
            hi = std::max(hi, holdout.num_at(i, r));
        }
        double range = hi - lo;
        ctx.inv_range[i] = range > 0.0 ? 1.0 / range : 1.0;
    }

    std::vector<double> credit(synth.rows, 0.0);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            double dt = ctx.nearest(train, r);
            double dh = ctx.nearest(holdout, r);
            credit[r] = dt < dh ? 1.0 : (dt == dh ? 0.5 : 0.0);
        }
    };
    std::size_t nthreads = std::max<std::size_t>(1, std::min(threads, synth.rows));
    if (nthreads == 1) {
        work(0, synth.rows);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (synth.rows + nthreads - 1) / nthreads;
        for (std::size_t k = 0; k < nthreads; ++k) {
            std::size_t b = k * chunk, e = std::min(synth.rows, b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& t : pool) t.join();
    }
    double total = 0.0;
    for (double c : credit) total += c;
    return total / static_cast<double>(synth.rows);
}

namespace {

// Numerical features standardized over the pooled rows; categorical columns
// one-hot encoded.
struct FeatureMap {
    std::size_t num_slots, cat_slots, width = 0;
    std::vector<double> mean, inv_std;
    std::vector<std::size_t> cat_offset;

    explicit FeatureMap(const Dataset& real, const Dataset& synth) {
        num_slots = real.schema.num_count();
        cat_slots = real.schema.columns.size() - num_slots;
        mean.assign(num_slots, 0.0);
        inv_std.assign(num_slots, 0.0);
        const double n = static_cast<double>(real.rows + synth.rows);
        for (std::size_t i = 0; i < num_slots; ++i) {
            double s = 0.0, s2 = 0.0;
            for (std::size_t r = 0; r < real.rows; ++r) {
                double v = real.num_at(i, r);
                s += v;
                s2 += v * v;
            }
            for (std::size_t r = 0; r < synth.rows; ++r) {
                double v = synth.num_at(i, r);
                s += v;
                s2 += v * v;
            }
            mean[i] = s / n;
            double var = s2 / n - mean[i] * mean[i];
            inv_std[i] = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
        }
        cat_offset.resize(cat_slots);
        width = num_slots;
        for (std::size_t j = 0; j < cat_slots; ++j) {
            cat_offset[j] = width;
            width += real.schema.cardinality(j);
        }
    }

    void encode(const Dataset& d, std::size_t row, double* out) const {
        std::fill(out, out + width, 0.0);
        for (std::size_t i = 0; i < num_slots; ++i)
            out[i] = (d.num_at(i, row) - mean[i]) * inv_std[i];
        for (std::size_t j = 0; j < cat_slots; ++j)
            out[cat_offset[j] + static_cast<std::size_t>(d.cat_at(j, row))] = 1.0;
    }
};

std::vector<std::size_t> shuffled_indices(std::size_t n, Philox& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

double c2st(const Dataset& real, const Dataset& synth, uint64_t seed) {
    check_match(real, synth, "c2st");
    if (real.rows < 4 || synth.rows < 4)
        throw ValidationError("c2st: need at least 4 rows per table");

    const FeatureMap fmap(real, synth);
    const std::size_t F = fmap.width;

    // Stratified half split within each class.
    Philox rng_r(seed, Philox::substream(streams::kMetric, 0));
    Philox rng_s(seed, Philox::substream(streams::kMetric, 1));
    auto ridx = shuffled_indices(real.rows, rng_r);
    auto sidx = shuffled_indices(synth.rows, rng_s);
    const std::size_t rh = real.rows / 2, sh = synth.rows / 2;

    std::vector<double> Xtr, Xte;
    std::vector<double> ytr, yte;
    auto push = [&](const Dataset& d, std::size_t row, double label, bool train_fold) {
        auto& X = train_fold ? Xtr : Xte;
        auto& y = train_fold ? ytr : yte;
        X.resize(X.size() + F);
        fmap.encode(d, row, X.data() + X.size() - F);
        y.push_back(label);
    };
    for (std::size_t i = 0; i < real.rows; ++i) push(real, ridx[i], 0.0, i < rh);
    for (std::size_t i = 0; i < synth.rows; ++i) push(synth, sidx[i], 1.0, i < sh);

    const std::size_t ntr = ytr.size(), nte = yte.size();
    if (ntr == 0 || nte == 0) throw ValidationError("c2st: degenerate split");

    // Logistic regression by full-batch gradient descent.
    const std::size_t epochs = 500;
    const double lr = 0.5, l2 = 1e-4;
    const auto& k = kern::ops();
    std::vector<double> w(F, 0.0), g(F, 0.0);
    double bias = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::fill(g.begin(), g.end(), 0.0);
        double gb = 0.0;
        for (std::size_t r = 0; r < ntr; ++r) {
            const double* x = Xtr.data() + r * F;
            double z = k.dot(F, w.data(), x) + bias;
            double p = 1.0 / (1.0 + std::exp(-z));
            double d = p - ytr[r];
            k.axpy(F, d, x, g.data());
            gb += d;
        }
        double inv = 1.0 / static_cast<double>(ntr);
        for (std::size_t f = 0; f < F; ++f) w[f] -= lr * (g[f] * inv + l2 * w[f]);
        bias -= lr * gb * inv;
    }

    // AUC on the held-out fold with midranks for tied scores.
    std::vector<double> score(nte);
    for (std::size_t r = 0; r < nte; ++r)
        score[r] = k.dot(F, w.data(), Xte.data() + r * F) + bias;
    std::vector<std::size_t> order(nte);
    for (std::size_t i = 0; i < nte; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(nte, 0.0);
    std::size_t i = 0;
    while (i < nte) {
        std::size_t j = i;
        while (j + 1 < nte && score[order[j + 1]] == score[order[i]]) ++j;
        double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double rank_pos = 0.0, npos = 0.0;
    for (std::size_t r = 0; r < nte; ++r)
        if (yte[r] == 1.0) {
            rank_pos += rank[r];
            npos += 1.0;
        }
    double nneg = static_cast<double>(nte) - npos;
    if (npos == 0.0 || nneg == 0.0) throw ValidationError("c2st: single-class test fold");
    double auc = (rank_pos - npos * (npos + 1.0) / 2.0) / (npos * nneg);
    return 1.0 - 2.0 * std::fabs(auc - 0.5);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& [name, err] : shape.columns)
        cols.push_back({{"column", name}, {"error_pct", err * 100.0}});
    j["shape"] = {{"columns", cols}, {"average_pct", shape.average * 100.0}};
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : trend.pairs)
        pairs.push_back(
            {{"col_a", p.col_a}, {"col_b", p.col_b}, {"error_pct", p.error * 100.0}});
    j["trend"] = {{"pairs", pairs}, {"average_pct", trend.average * 100.0}};
    j["c2st"] = c2st_score;
    if (dcr.has_value())
        j["dcr"] = *dcr;
    else
        j["dcr"] = nullptr;
    j["metadata"] = {{"real_rows", real_rows}, {"synth_rows", synth_rows}, {"seed", seed}};
    if (!trend.warnings.empty()) j["warnings"] = trend.warnings;
    return j;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    char buf[64];
    auto pct = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.4f%%", v * 100.0);
        return std::string(buf);
    };
    os << "Shape error (average): " << pct(shape.average) << '\n';
    for (const auto& [name, err] : shape.columns)
        os << "  " << name << ": " << pct(err) << '\n';
    os << "Trend error (average): " << pct(trend.average) << '\n';
    for (const auto& p : trend.pairs)
        os << "  " << p.col_a << " x " << p.col_b << ": " << pct(p.error) << '\n';
    std::snprintf(buf, sizeof(buf), "%.6f", c2st_score);
    os << "C2ST score: " << buf << '\n';
    if (dcr.has_value()) {
        std::snprintf(buf, sizeof(buf), "%.6f", *dcr);
        os << "DCR score: " << buf << '\n';
    } else {
        os << "DCR score: not computed (supply train and holdout tables)\n";
    }
    os << "Rows: real=" << real_rows << " synth=" << synth_rows << " seed=" << seed << '\n';
    for (const auto& w : trend.warnings) os << "Warning: " << w << '\n';
    return os.str();
}

MetricReport evaluate(const Dataset& real, const Dataset& synth, const Dataset* train,
                      const Dataset* holdout, uint64_t seed, std::size_t threads) {
    if ((train == nullptr) != (holdout == nullptr))
        throw ValidationError("evaluate: train and holdout must be supplied together");
    MetricReport rep;
    rep.shape = shape_error(real, synth);
    rep.trend = trend_error(real, synth);
    rep.c2st_score = c2st(real, synth, seed);
    if (train && holdout) rep.dcr = dcr_score(*train, *holdout, synth, threads);
    rep.real_rows = real.rows;
    rep.synth_rows = synth.rows;
    rep.seed = seed;
    return rep;
}

}  // namespace tabgen
