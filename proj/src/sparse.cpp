#include "cmlab/sparse.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "cmlab/error.hpp"

namespace cmlab {

void CsrMatrix::multiply(const std::vector<double>& x, std::vector<double>& y) const {
    y.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) s += val[p] * x[col[p]];
        y[r] = s;
    }
}

std::vector<double> CsrMatrix::diagonal() const {
    std::vector<double> d(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
            if (std::size_t(col[p]) == r) d[r] += val[p];
    return d;
}

JacobiPreconditioner::JacobiPreconditioner(const CsrMatrix& a) : inv_diag_(a.diagonal()) {
    for (auto& d : inv_diag_) d = d != 0.0 ? 1.0 / d : 1.0;
}

void JacobiPreconditioner::apply(const std::vector<double>& r, std::vector<double>& z) const {
    z.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv_diag_[i] * r[i];
}

struct AggregationAmg::Level {
    const CsrMatrix* a = nullptr;  // operator on this level
    CsrMatrix owned;               // storage for coarse levels
    std::vector<double> inv_diag;
    std::vector<std::int32_t> aggregate;  // fine row -> coarse row (next level)
    std::size_t coarse_rows = 0;
    mutable std::vector<double> r, bc, xc;
};

struct AggregationAmg::Coarse {
    Eigen::LLT<Eigen::MatrixXd> llt;
    mutable Eigen::VectorXd rhs;
};

namespace {

struct Aggregation {
    std::vector<std::int32_t> of_row;
    std::vector<AggregationKey> coarse_keys;
};

Aggregation aggregate(const std::vector<AggregationKey>& keys) {
    Aggregation out;
    out.of_row.resize(keys.size());
    std::map<std::array<std::int32_t, 3>, std::int32_t> index;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto& k = keys[i];
        if (k.c[0] == AggregationKey::kSolitary) {
            out.of_row[i] = static_cast<std::int32_t>(out.coarse_keys.size());
            out.coarse_keys.push_back(k);
            continue;
        }
        const std::array<std::int32_t, 3> ck{k.c[0] >> 1, k.c[1] >> 1, k.c[2] >> 1};
        auto [it, inserted] = index.try_emplace(ck, static_cast<std::int32_t>(out.coarse_keys.size()));
        if (inserted) out.coarse_keys.push_back(AggregationKey{ck});
        out.of_row[i] = it->second;
    }
    return out;
}

// P^T A P for the piecewise-constant prolongation given by agg.
CsrMatrix galerkin(const CsrMatrix& a, const std::vector<std::int32_t>& agg, std::size_t n_coarse) {
    std::vector<std::size_t> start(n_coarse + 1, 0);
    for (auto g : agg) ++start[g + 1];
    for (std::size_t i = 0; i < n_coarse; ++i) start[i + 1] += start[i];
    std::vector<std::size_t> members(agg.size());
    {
        auto fill = start;
        for (std::size_t i = 0; i < agg.size(); ++i) members[fill[agg[i]]++] = i;
    }
    CsrMatrix c;
    c.rows = n_coarse;
    c.row_ptr.assign(1, 0);
    std::vector<double> acc(n_coarse, 0.0);
    std::vector<std::int32_t> marker(n_coarse, -1), touched;
    for (std::size_t g = 0; g < n_coarse; ++g) {
        touched.clear();
        for (std::size_t m = start[g]; m < start[g + 1]; ++m) {
            const std::size_t r = members[m];
            for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
                const auto cg = agg[a.col[p]];
                if (marker[cg] != static_cast<std::int32_t>(g)) {
                    marker[cg] = static_cast<std::int32_t>(g);
                    acc[cg] = 0.0;
                    touched.push_back(cg);
                }
                acc[cg] += a.val[p];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (auto cg : touched) {
            c.col.push_back(cg);
            c.val.push_back(acc[cg]);
        }
        c.row_ptr.push_back(c.col.size());
    }
    return c;
}

void gauss_seidel(const CsrMatrix& a, const std::vector<double>& inv_diag, const std::vector<double>& b,
                  std::vector<double>& x, bool forward) {
    const std::size_t n = a.rows;
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t r = forward ? s : n - 1 - s;
        double sum = b[r];
        for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p)
            if (std::size_t(a.col[p]) != r) sum -= a.val[p] * x[a.col[p]];
        x[r] = sum * inv_diag[r];
    }
}

}  // namespace

AggregationAmg::AggregationAmg(const CsrMatrix& a, std::vector<AggregationKey> keys)
    : AggregationAmg(a, std::move(keys), Options{}) {}

AggregationAmg::AggregationAmg(const CsrMatrix& a, std::vector<AggregationKey> keys, Options options)
    : fine_(a), options_(options) {
    if (keys.size() != a.rows) throw Error(ErrorCode::invalid_argument, "one aggregation key per row required");
    auto first = std::make_unique<Level>();
    first->a = &a;
    levels_.push_back(std::move(first));
    for (;;) {
        Level& level = *levels_.back();
        level.inv_diag = level.a->diagonal();
        for (auto& d : level.inv_diag) d = d != 0.0 ? 1.0 / d : 1.0;
        if (level.a->rows <= options_.coarse_limit || static_cast<int>(levels_.size()) >= options_.max_levels)
            break;
        Aggregation agg = aggregate(keys);
        if (agg.coarse_keys.size() == level.a->rows) break;
        level.aggregate = std::move(agg.of_row);
        level.coarse_rows = agg.coarse_keys.size();
        auto next = std::make_unique<Level>();
        next->owned = galerkin(*level.a, level.aggregate, level.coarse_rows);
        next->a = &next->owned;
        keys = std::move(agg.coarse_keys);
        levels_.push_back(std::move(next));
    }
    const CsrMatrix& last = *levels_.back()->a;
    if (last.rows <= 4 * options_.coarse_limit) {
        Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(last.rows, last.rows);
        for (std::size_t r = 0; r < last.rows; ++r)
            for (std::size_t p = last.row_ptr[r]; p < last.row_ptr[r + 1]; ++p) dense(r, last.col[p]) += last.val[p];
        coarse_ = std::make_unique<Coarse>();
        coarse_->llt.compute(dense);
        if (coarse_->llt.info() != Eigen::Success) coarse_.reset();
    }
}

AggregationAmg::~AggregationAmg() = default;

std::size_t AggregationAmg::levels() const { return levels_.size(); }

void AggregationAmg::cycle(std::size_t l, const std::vector<double>& b, std::vector<double>& x) const {
    const Level& level = *levels_[l];
    const CsrMatrix& a = *level.a;
    if (l + 1 == levels_.size()) {
        if (coarse_) {
            coarse_->rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
            Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())) = coarse_->llt.solve(coarse_->rhs);
        } else {
            for (int s = 0; s < 4; ++s) {
                gauss_seidel(a, level.inv_diag, b, x, true);
                gauss_seidel(a, level.inv_diag, b, x, false);
            }
        }
        return;
    }
    gauss_seidel(a, level.inv_diag, b, x, true);
    a.multiply(x, level.r);
    for (std::size_t i = 0; i < a.rows; ++i) level.r[i] = b[i] - level.r[i];
    level.bc.assign(level.coarse_rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) level.bc[level.aggregate[i]] += level.r[i];
    level.xc.assign(level.coarse_rows, 0.0);
    cycle(l + 1, level.bc, level.xc);
    const double alpha = options_.coarse_scaling;
    for (std::size_t i = 0; i < a.rows; ++i) x[i] += alpha * level.xc[level.aggregate[i]];
    gauss_seidel(a, level.inv_diag, b, x, false);
}

void AggregationAmg::apply(const std::vector<double>& r, std::vector<double>& z) const {
    z.assign(r.size(), 0.0);
    cycle(0, r, z);
}

CgResult pcg(const CsrMatrix& a, const std::vector<double>& b, std::vector<double>& x, const Preconditioner& m,
             double tolerance, std::size_t max_iterations) {
    const std::size_t n = a.rows;
    CgResult res;
    x.resize(n, 0.0);
    double bnorm = 0.0;
    for (double v : b) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        res.converged = true;
        return res;
    }
    std::vector<double> r(n), z(n), p(n), q(n);
    a.multiply(x, q);
    double rnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b[i] - q[i];
        rnorm += r[i] * r[i];
    }
    res.relative_residual = std::sqrt(rnorm) / bnorm;
    if (res.relative_residual <= tolerance) {
        res.converged = true;
        return res;
    }
    m.apply(r, z);
    p = z;
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
    while (res.iterations < max_iterations) {
        a.multiply(p, q);
        double pq = 0.0;
        for (std::size_t i = 0; i < n; ++i) pq += p[i] * q[i];
        const double alpha = rz / pq;
        rnorm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rnorm += r[i] * r[i];
        }
        ++res.iterations;
        res.relative_residual = std::sqrt(rnorm) / bnorm;
        if (res.relative_residual <= tolerance) {
            res.converged = true;
            break;
        }
        m.apply(r, z);
        double rz_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) rz_new += r[i] * z[i];
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return res;
}

}  // namespace cmlab
