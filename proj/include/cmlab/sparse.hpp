#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace cmlab {

/// Symmetric matrix in compressed-row form (both triangles stored).
struct CsrMatrix {
    std::size_t rows = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::int32_t> col;
    std::vector<double> val;

    std::size_t nonzeros() const { return val.size(); }
    void multiply(const std::vector<double>& x, std::vector<double>& y) const;
    std::vector<double> diagonal() const;
};

class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    /// z = M^{-1} r.
    virtual void apply(const std::vector<double>& r, std::vector<double>& z) const = 0;
};

class JacobiPreconditioner final : public Preconditioner {
public:
    explicit JacobiPreconditioner(const CsrMatrix& a);
    void apply(const std::vector<double>& r, std::vector<double>& z) const override;

private:
    std::vector<double> inv_diag_;
};

/// Coarsening key of an unknown: lattice coordinates, or kSolitary for unknowns that always form
/// their own aggregate (the merged inclusion potentials).
struct AggregationKey {
    static constexpr std::int32_t kSolitary = -1;
    std::array<std::int32_t, 3> c{kSolitary, kSolitary, kSolitary};
};

/// Unsmoothed aggregation multigrid with 2x2x2 lattice aggregates, Galerkin coarse operators,
/// symmetric Gauss-Seidel smoothing, an over-relaxed coarse correction, and a dense Cholesky
/// solve on the coarsest level. Used as a V-cycle preconditioner.
class AggregationAmg final : public Preconditioner {
public:
    struct Options {
        std::size_t coarse_limit = 1500;
        double coarse_scaling = 1.6;
        int max_levels = 16;
    };

    AggregationAmg(const CsrMatrix& a, std::vector<AggregationKey> keys, Options options);
    AggregationAmg(const CsrMatrix& a, std::vector<AggregationKey> keys);
    ~AggregationAmg() override;

    void apply(const std::vector<double>& r, std::vector<double>& z) const override;
    std::size_t levels() const;

private:
    struct Level;
    struct Coarse;
    void cycle(std::size_t l, const std::vector<double>& b, std::vector<double>& x) const;

    const CsrMatrix& fine_;
    Options options_;
    std::vector<std::unique_ptr<Level>> levels_;
    std::unique_ptr<Coarse> coarse_;
};

struct CgResult {
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Preconditioned conjugate gradients; x holds the initial guess on entry.
CgResult pcg(const CsrMatrix& a, const std::vector<double>& b, std::vector<double>& x, const Preconditioner& m,
             double tolerance, std::size_t max_iterations);

}  // namespace cmlab
