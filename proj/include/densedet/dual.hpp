#pragma once

#include <array>
#include <cmath>

namespace densedet {

// Forward-mode dual number with four tangents; enough for differentiating
// a scalar loss through one box's four corner coordinates.
struct Dual4 {
    double v = 0;
    std::array<double, 4> g{0, 0, 0, 0};

    Dual4() = default;
    Dual4(double value) : v(value) {}
    static Dual4 var(double value, int slot) {
        Dual4 d(value);
        d.g[size_t(slot)] = 1.0;
        return d;
    }

    Dual4 operator-() const {
        Dual4 r(-v);
        for (int i = 0; i < 4; ++i) r.g[size_t(i)] = -g[size_t(i)];
        return r;
    }
};

inline Dual4 operator+(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v + b.v);
    for (int i = 0; i < 4; ++i) r.g[size_t(i)] = a.g[size_t(i)] + b.g[size_t(i)];
    return r;
}
inline Dual4 operator-(const Dual4& a, const Dual4& b) { return a + (-b); }
inline Dual4 operator*(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v * b.v);
    for (int i = 0; i < 4; ++i) r.g[size_t(i)] = a.g[size_t(i)] * b.v + a.v * b.g[size_t(i)];
    return r;
}
inline Dual4 operator/(const Dual4& a, const Dual4& b) {
    Dual4 r(a.v / b.v);
    for (int i = 0; i < 4; ++i)
        r.g[size_t(i)] = (a.g[size_t(i)] * b.v - a.v * b.g[size_t(i)]) / (b.v * b.v);
    return r;
}

inline Dual4 dmax(const Dual4& a, const Dual4& b) { return a.v >= b.v ? a : b; }
inline Dual4 dmin(const Dual4& a, const Dual4& b) { return a.v <= b.v ? a : b; }

inline Dual4 datan(const Dual4& a) {
    Dual4 r(std::atan(a.v));
    double s = 1.0 / (1.0 + a.v * a.v);
    for (int i = 0; i < 4; ++i) r.g[size_t(i)] = a.g[size_t(i)] * s;
    return r;
}

}  // namespace densedet
