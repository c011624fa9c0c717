#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qoc {

using Complex = std::complex<double>;
using Operator = Eigen::MatrixXcd;   // dense complex square matrix, row/col indexed over the product basis
using State = Eigen::VectorXcd;      // complex amplitude vector over the product basis

// Product dimensions beyond this refuse to build (kron / embeddings / full Hamiltonians).
inline constexpr Eigen::Index kDimCap = 32768;

// Thrown when a requested operator or state space exceeds kDimCap or shapes mismatch.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on numerical failures (non-finite input, non-convergence, lost norm).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on invalid run configuration (bad units, under-resolved grids, missing files).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a coupling layout does not have the pairwise structure an algorithm needs.
struct StructureError : std::runtime_error {
    explicit StructureError(const std::string& what) : std::runtime_error(what) {}
};

inline Eigen::Index product_dim(const std::vector<int>& dims)
{
    Eigen::Index total = 1;
    for (int d : dims) {
        if (d < 1) throw DimensionError("factor dimension must be >= 1");
        if (total > kDimCap / d) throw DimensionError("product dimension exceeds cap");
        total *= d;
    }
    return total;
}

} // namespace qoc
