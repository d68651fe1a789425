#pragma once

#include <Eigen/Dense>
#include <complex>

namespace gridloop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Complex = std::complex<double>;

/// Symmetrize in place: A <- (A + A^T)/2.
inline void symmetrize(Mat& a) { a = ((a + a.transpose()) * 0.5).eval(); }

}  // namespace gridloop
