#include "dg/matrix_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dg/errors.hpp"

namespace dg {

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void save_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_real(m(r, c));
    }
    os << '\n';
  }
}

Eigen::MatrixXd load_matrix(std::istream& is) {
  Eigen::Index rows = -1, cols = -1;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0)
    throw DataError("matrix load: bad dimension header");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(is >> m(r, c)))
        throw DataError("matrix load: truncated at row " + std::to_string(r));
  return m;
}

void save_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path);
  save_matrix(os, m);
  if (!os) throw DataError("write failed: " + path);
}

Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  return load_matrix(is);
}

}  // namespace dg
