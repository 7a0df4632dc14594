#pragma once

namespace stlr {

/// F(x) = e^{-x^2} int_0^x e^{s^2} ds, absolute error below 1e-12 for |x| <= 50.
/// Maclaurin series in extended precision up to |x| = 4; beyond that the
/// integral is rewritten with the weight e^{-u(2x-u)} and evaluated by
/// Gauss panels, which stays accurate where the asymptotic series cannot.
double dawson(double x);

/// Newton iteration on erfc with a logarithmic initial guess.
/// Domain (0, 2); throws std::domain_error outside.
double erfc_inverse(double y);

}  // namespace stlr
