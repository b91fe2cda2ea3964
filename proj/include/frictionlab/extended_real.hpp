#pragma once

#include <cmath>
#include <ostream>

#include "frictionlab/error.hpp"

namespace frictionlab {

/// A real number or one of +inf / -inf, carried as an explicit tag.
///
/// Conjugate penalties are +inf outside their effective domain and the dual
/// objective is -inf for infeasible measures. Keeping the tag out of the
/// floating-point payload means infeasibility is detected by a branch, not by
/// IEEE propagation through sums and products.
class ExtendedReal {
public:
    enum class Tag { finite, plus_infinity, minus_infinity };

    constexpr ExtendedReal() = default;
    constexpr ExtendedReal(double v) : value_(v) {}  // NOLINT: implicit by design of the arithmetic

    static constexpr ExtendedReal plus_infinity() { return ExtendedReal(Tag::plus_infinity); }
    static constexpr ExtendedReal minus_infinity() { return ExtendedReal(Tag::minus_infinity); }

    constexpr bool is_finite() const { return tag_ == Tag::finite; }
    constexpr bool is_plus_infinity() const { return tag_ == Tag::plus_infinity; }
    constexpr bool is_minus_infinity() const { return tag_ == Tag::minus_infinity; }
    constexpr Tag tag() const { return tag_; }

    /// Finite payload; throws for infinite values.
    double value() const {
        if (tag_ != Tag::finite) throw NumericalFailure("ExtendedReal::value() on an infinite value");
        return value_;
    }

    /// Payload with infinities mapped to +-HUGE_VAL, for reporting only.
    double to_double() const {
        switch (tag_) {
            case Tag::plus_infinity: return HUGE_VAL;
            case Tag::minus_infinity: return -HUGE_VAL;
            default: return value_;
        }
    }

    friend ExtendedReal operator-(ExtendedReal a) {
        switch (a.tag_) {
            case Tag::plus_infinity: return minus_infinity();
            case Tag::minus_infinity: return plus_infinity();
            default: return ExtendedReal(-a.value_);
        }
    }

    /// +inf + -inf is undefined and raises.
    friend ExtendedReal operator+(ExtendedReal a, ExtendedReal b) {
        if (a.is_finite() && b.is_finite()) return ExtendedReal(a.value_ + b.value_);
        if ((a.is_plus_infinity() && b.is_minus_infinity()) ||
            (a.is_minus_infinity() && b.is_plus_infinity()))
            throw NumericalFailure("ExtendedReal: inf - inf");
        return a.is_finite() ? b : a;
    }
    friend ExtendedReal operator-(ExtendedReal a, ExtendedReal b) { return a + (-b); }

    /// Scaling by a nonnegative weight; 0 * inf = 0 (the 0/0 = 0 convention of
    /// perspective functions).
    friend ExtendedReal operator*(double w, ExtendedReal a) {
        if (w < 0.0) return -((-w) * a);
        if (a.is_finite()) return ExtendedReal(w * a.value_);
        if (w == 0.0) return ExtendedReal(0.0);
        return a;
    }

    friend bool operator<(ExtendedReal a, ExtendedReal b) { return a.rank() < b.rank() || (a.rank() == b.rank() && a.is_finite() && a.value_ < b.value_); }
    friend bool operator>(ExtendedReal a, ExtendedReal b) { return b < a; }
    friend bool operator<=(ExtendedReal a, ExtendedReal b) { return !(b < a); }
    friend bool operator>=(ExtendedReal a, ExtendedReal b) { return !(a < b); }
    friend bool operator==(ExtendedReal a, ExtendedReal b) {
        return a.tag_ == b.tag_ && (!a.is_finite() || a.value_ == b.value_);
    }

    friend std::ostream& operator<<(std::ostream& os, ExtendedReal a) {
        if (a.is_plus_infinity()) return os << "+inf";
        if (a.is_minus_infinity()) return os << "-inf";
        return os << a.value_;
    }

private:
    constexpr explicit ExtendedReal(Tag t) : tag_(t) {}
    constexpr int rank() const { return tag_ == Tag::minus_infinity ? -1 : (tag_ == Tag::plus_infinity ? 1 : 0); }

    double value_ = 0.0;
    Tag tag_ = Tag::finite;
};

}  // namespace frictionlab
