// Built with -ffast-math -fopenmp-simd so glibc's vector math library
// (libmvec) supplies the sin/cos kernels. Nothing else belongs in this file.
#include <math.h>

namespace usinr::detail {

void vector_sin(double* x, long n) {
#pragma omp simd
  for (long i = 0; i < n; ++i) x[i] = sin(x[i]);
}

void vector_sincos(double* x, double* c, long n) {
#pragma omp simd
  for (long i = 0; i < n; ++i) {
    const double v = x[i];
    x[i] = sin(v);
    c[i] = cos(v);
  }
}

}  // namespace usinr::detail
