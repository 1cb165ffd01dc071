#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "retarget/error.hpp"

namespace retarget {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr Vec3& operator-=(const Vec3& o) {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    constexpr Vec3& operator*=(double s) {
        x *= s;
        y *= s;
        z *= s;
        return *this;
    }

    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline bool is_finite(const Vec3& a) {
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DomainError("cannot normalize a zero-length or non-finite vector");
    }
    return a / n;
}

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{};

    static constexpr Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }

    static constexpr Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        return Mat3{{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }

    constexpr double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }
    constexpr double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }

    constexpr Vec3 col(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }
    constexpr Vec3 row(int r) const { return {(*this)(r, 0), (*this)(r, 1), (*this)(r, 2)}; }

    friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
        }
    }
    return out;
}

constexpr Vec3 operator*(const Mat3& a, const Vec3& v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
            a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

constexpr Mat3 operator+(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (std::size_t i = 0; i < 9; ++i) out.m[i] = a.m[i] + b.m[i];
    return out;
}

constexpr Mat3 operator*(double s, const Mat3& a) {
    Mat3 out;
    for (std::size_t i = 0; i < 9; ++i) out.m[i] = s * a.m[i];
    return out;
}

constexpr Mat3 transpose(const Mat3& a) {
    Mat3 out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out(r, c) = a(c, r);
    }
    return out;
}

constexpr double determinant(const Mat3& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

constexpr Mat3 skew(const Vec3& k) {
    return Mat3{{0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0}};
}

// Orthonormal columns and det = +1, both within tol.
inline bool is_rotation(const Mat3& a, double tol = 1e-9) {
    for (double v : a.m) {
        if (!std::isfinite(v)) return false;
    }
    const Mat3 g = transpose(a) * a;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            if (std::abs(g(r, c) - (r == c ? 1.0 : 0.0)) > tol) return false;
        }
    }
    return std::abs(determinant(a) - 1.0) <= tol;
}

// Rotation by `angle` about the unit axis `axis` (Rodrigues).
inline Mat3 axis_angle_matrix(const Vec3& axis, double angle) {
    const Mat3 k = skew(axis);
    return Mat3::identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * (k * k);
}

inline Mat3 rot_x(double a) { return axis_angle_matrix({1, 0, 0}, a); }
inline Mat3 rot_y(double a) { return axis_angle_matrix({0, 1, 0}, a); }
inline Mat3 rot_z(double a) { return axis_angle_matrix({0, 0, 1}, a); }

// ---------------------------------------------------------------------------
// Vector-to-vector rotation
// ---------------------------------------------------------------------------

// Below this cross-product norm the two directions count as (anti)parallel and
// the identity is returned, including for the antiparallel case.
inline constexpr double kParallelThreshold = 1e-2;

struct VectorRotation {
    Mat3 rotation = Mat3::identity();
    bool degenerate = false;  // identity branch taken
};

inline VectorRotation rotation_between_checked(const Vec3& v1, const Vec3& v2) {
    const double n1 = norm(v1);
    const double n2 = norm(v2);
    if (!(n1 > 0.0) || !(n2 > 0.0) || !std::isfinite(n1) || !std::isfinite(n2)) {
        throw DomainError("rotation_between: input vectors must be finite and non-zero");
    }
    const Vec3 a = v1 / n1;
    const Vec3 b = v2 / n2;
    const Vec3 k = cross(a, b);
    const double theta = std::acos(std::clamp(dot(a, b), -1.0, 1.0));
    const double kn = norm(k);
    if (kn < kParallelThreshold) {
        return {Mat3::identity(), true};
    }
    const Mat3 kk = skew(k / kn);
    return {Mat3::identity() + std::sin(theta) * kk + (1.0 - std::cos(theta)) * (kk * kk), false};
}

// Rotation taking the direction of v1 onto the direction of v2. Returns the
// identity whenever ||v1^ x v2^|| < 1e-2, which covers both near-parallel and
// near-antiparallel inputs.
inline Mat3 rotation_between(const Vec3& v1, const Vec3& v2) {
    return rotation_between_checked(v1, v2).rotation;
}

// ---------------------------------------------------------------------------
// Quaternions (Hamilton, scalar first)
// ---------------------------------------------------------------------------

struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static constexpr Quat identity() { return {1.0, 0.0, 0.0, 0.0}; }

    constexpr Vec3 vec() const { return {x, y, z}; }

    friend constexpr bool operator==(const Quat&, const Quat&) = default;
};

constexpr Quat operator-(const Quat& q) { return {-q.w, -q.x, -q.y, -q.z}; }

constexpr double dot(const Quat& a, const Quat& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

inline double norm(const Quat& q) { return std::sqrt(dot(q, q)); }

inline bool is_unit(const Quat& q, double tol = 1e-9) {
    const double n = norm(q);
    return std::isfinite(n) && std::abs(n - 1.0) <= tol;
}

constexpr Quat quat_mul(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat quat_inv(const Quat& q) {
    const double n2 = dot(q, q);
    if (!(n2 > 0.0) || !std::isfinite(n2)) {
        throw DomainError("quat_inv: zero or non-finite quaternion");
    }
    return {q.w / n2, -q.x / n2, -q.y / n2, -q.z / n2};
}

inline Vec3 quat_rotate(const Quat& q, const Vec3& v) {
    // v' = v + 2w (u x v) + 2 u x (u x v)
    const Vec3 u = q.vec();
    const Vec3 t = 2.0 * cross(u, v);
    return v + q.w * t + cross(u, t);
}

inline Quat normalized(const Quat& q) {
    const double n = norm(q);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DomainError("cannot normalize a zero-length or non-finite quaternion");
    }
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

// Picks the w >= 0 representative; for w == 0 the first non-zero vector
// component is made positive.
inline Quat canonical(const Quat& q) {
    if (q.w > 0.0) return q;
    if (q.w < 0.0) return -q;
    if (q.x != 0.0) return q.x > 0.0 ? q : -q;
    if (q.y != 0.0) return q.y > 0.0 ? q : -q;
    return q.z >= 0.0 ? q : -q;
}

inline Quat axis_angle_quat(const Vec3& axis, double angle) {
    const Vec3 u = normalized(axis);
    const double s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), u.x * s, u.y * s, u.z * s};
}

inline Mat3 quat_to_mat(const Quat& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                 2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                 2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

// Shepperd's method: branch on the largest of (trace, diagonal) for accuracy.
inline Quat mat_to_quat(const Mat3& m) {
    if (!is_rotation(m)) {
        throw DomainError("mat_to_quat: input is not a proper rotation matrix");
    }
    const double tr = m(0, 0) + m(1, 1) + m(2, 2);
    Quat q;
    if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + tr);
        q = {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
    } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
        q = {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
    } else if (m(1, 1) >= m(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
        q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s};
    } else {
        const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
        q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s};
    }
    return canonical(normalized(q));
}

}  // namespace retarget
