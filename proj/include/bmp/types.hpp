#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace bmp {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using RealVec = Eigen::VectorXd;
using RealMat = Eigen::MatrixXd;

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IllConditioned : NumericalError {
    using NumericalError::NumericalError;
};

struct DominanceViolation : NumericalError {
    using NumericalError::NumericalError;
};

struct NonDecaying : NumericalError {
    using NumericalError::NumericalError;
};

struct NotInRegime : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct AmbiguousMembership : NumericalError {
    using NumericalError::NumericalError;
};

inline double sup_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
inline double sup_norm_mat(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace bmp
