#pragma once
// Minimal double-double arithmetic (Dekker/Knuth error-free transforms) for
// the determinant LU kernel.  Monomial Vandermonde matrices are exponentially
// ill-conditioned in the configuration size, and plain double LU loses all
// significant digits of log|det| around N ~ 40-50; carrying ~31 significant
// digits through the elimination keeps the log-magnitude accurate to ~1e-12
// for every configuration size this project uses.  Internal to the library.

#include <cmath>

namespace feklab::detail {

struct dd {
  double hi = 0.0, lo = 0.0;
  dd() = default;
  dd(double h) : hi(h), lo(0.0) {}
  dd(double h, double l) : hi(h), lo(l) {}
};

inline dd two_sum(double a, double b) {
  double s = a + b;
  double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}
inline dd quick_two_sum(double a, double b) {  // requires |a| >= |b|
  double s = a + b;
  return {s, b - (s - a)};
}
inline dd two_prod(double a, double b) {
  double p = a * b;
  return {p, std::fma(a, b, -p)};
}

inline dd add(const dd& x, const dd& y) {
  dd s = two_sum(x.hi, y.hi);
  dd t = two_sum(x.lo, y.lo);
  double e = s.lo + t.hi;
  dd r = quick_two_sum(s.hi, e);
  e = r.lo + t.lo;
  return quick_two_sum(r.hi, e);
}
inline dd sub(const dd& x, const dd& y) { return add(x, dd{-y.hi, -y.lo}); }
inline dd mul(const dd& x, const dd& y) {
  dd p = two_prod(x.hi, y.hi);
  double e = p.lo + x.hi * y.lo + x.lo * y.hi;
  return quick_two_sum(p.hi, e);
}
inline dd mul(const dd& x, double y) {
  dd p = two_prod(x.hi, y);
  double e = p.lo + x.lo * y;
  return quick_two_sum(p.hi, e);
}
inline dd div(const dd& x, const dd& y) {
  double q1 = x.hi / y.hi;
  dd r = sub(x, mul(y, q1));
  double q2 = r.hi / y.hi;
  r = sub(r, mul(y, q2));
  double q3 = r.hi / y.hi;
  dd q = quick_two_sum(q1, q2);
  return add(q, dd{q3});
}

// Complex double-double.
struct ddc {
  dd re, im;
  ddc() = default;
  ddc(dd r, dd i) : re(r), im(i) {}
  ddc(double r, double i = 0.0) : re(r), im(i) {}
};

inline ddc add(const ddc& a, const ddc& b) { return {add(a.re, b.re), add(a.im, b.im)}; }
inline ddc sub(const ddc& a, const ddc& b) { return {sub(a.re, b.re), sub(a.im, b.im)}; }
inline ddc mul(const ddc& a, const ddc& b) {
  return {sub(mul(a.re, b.re), mul(a.im, b.im)), add(mul(a.re, b.im), mul(a.im, b.re))};
}
inline ddc mul(const ddc& a, double s) { return {mul(a.re, s), mul(a.im, s)}; }
inline dd norm2(const ddc& a) { return add(mul(a.re, a.re), mul(a.im, a.im)); }
inline ddc div(const ddc& a, const ddc& b) {
  dd n2 = norm2(b);
  ddc num = mul(a, ddc{b.re, dd{-b.im.hi, -b.im.lo}});
  return {div(num.re, n2), div(num.im, n2)};
}

}  // namespace feklab::detail
