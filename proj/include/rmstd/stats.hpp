#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace rmstd {

inline double normal_cdf(double z) {
  static const boost::math::normal dist;
  return boost::math::cdf(dist, z);
}

inline double normal_quantile(double p) {
  static const boost::math::normal dist;
  return boost::math::quantile(dist, p);
}

inline double chi_squared_quantile(double p, double df) {
  boost::math::chi_squared dist(df);
  return boost::math::quantile(dist, p);
}

}  // namespace rmstd
