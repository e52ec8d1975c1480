#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>

namespace dg {

// Plain-text matrix dump: "rows cols" header line, then one whitespace
// separated row per line. Reals are written with 17 significant digits so a
// dump/load cycle reproduces the doubles bit for bit.

void save_matrix(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(std::istream& is);

void save_matrix(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::string& path);

// %.17g formatting shared by every text emitter in the project.
std::string format_real(double x);

}  // namespace dg
