#pragma once

#include <functional>
#include <vector>

namespace tcsim {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule mapped to [a, b].
QuadratureRule gauss_legendre(int n, double a, double b);

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f);

}  // namespace tcsim
