#ifndef ORBITLAB_CALIBRATION_HPP
#define ORBITLAB_CALIBRATION_HPP

// Desk-scale constants.  The theory only asserts existence for most of
// these; the values below were measured on the calibration suites in
// tests/ and are frozen here so that reruns are regressions, not re-fits.

namespace orbitlab::calib {

// inj(x) = min(0.01, kInjScale * min_{gamma} ||g gamma g^-1 - I||)
inline constexpr double kInjScale = 0.05;

// X_{eta_X} threshold: 99% of expanded u-fibers return above this
// injectivity radius once t passes the recurrence threshold.
inline constexpr double kEtaX = 1e-4;

// additive offset in t >= |log(eta^2 inj(x))| + offset for the recurrence
// statements
inline constexpr double kRecurrenceOffset = 6.0;

// fitted slope of |{r : inj(a_t u_r x) < eps^2}| / |I| <= slope * eps,
// measured on SL2(Z[i]) at t = 12.  The eps = 0.1, 0.2 entries sit at the
// inj cap (eps^2 >= 0.01), which is what pins the value.
inline constexpr double kRecurrenceSlope = 10.0;

// contraction bound C5 e^{-m(1-alpha)/4}/(2-2^alpha) ||w||^{-alpha};
// C5 measured over alpha in {0.5, 0.75, 0.9}, m in 1..12 (2x headroom)
inline constexpr double kC5 = 4.0;

// Margulis-inequality constant C13 (fixture, 2x headroom over measurement)
inline constexpr double kC13 = 4.0;

// sheet-count constants of the psi bounds (fixtures)
inline constexpr double kC14Count = 2.0;
inline constexpr double kC14Psi = 2.0;

// periodic-orbit count constant #I(y) <= C16 * v-proxy
inline constexpr double kC16 = 8.0;

// first-run fixtures for the projection machinery
inline constexpr double kRegularizeCPrimeCap = 24.0;  // certificate constant C'
inline constexpr double kProjectionCKappaFixture = 12.5;

// regularity-constant cap used by rho_regularity_check's pass verdict
inline constexpr double kRhoConstantCap = 32.0;

}  // namespace orbitlab::calib

#endif
