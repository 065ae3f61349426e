#pragma once

#include <array>
#include <cmath>

namespace oracle {

// CIE L*a*b* written in the epsilon/kappa form with the rounded IEC sRGB
// matrix, so it shares no code or constants layout with the library.
inline std::array<double, 3> srgb_to_lab(double r, double g, double b) {
    auto lin = [](double c) { return c > 0.04045 ? std::pow((c + 0.055) / 1.055, 2.4) : c / 12.92; };
    const double R = lin(r), G = lin(g), B = lin(b);
    const double X = 0.4124 * R + 0.3576 * G + 0.1805 * B;
    const double Y = 0.2126 * R + 0.7152 * G + 0.0722 * B;
    const double Z = 0.0193 * R + 0.1192 * G + 0.9505 * B;
    constexpr double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
    auto f = [&](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };
    const double fx = f(X / 0.95047), fy = f(Y / 1.0), fz = f(Z / 1.08883);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}
