//! Exponentially scaled modified Bessel functions of the first kind.
//!
//! Polynomial approximations after Abramowitz & Stegun 9.8.1-9.8.4,
//! absolute error around 1e-7 relative to the scaled value.

/// `exp(-|x|) * I0(x)`.
pub fn i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 3.75 {
        let y = (x / 3.75).powi(2);
        let i0 = 1.0
            + y * (3.5156229
                + y * (3.0899424
                    + y * (1.2067492 + y * (0.2659732 + y * (0.0360768 + y * 0.0045813)))));
        i0 * (-ax).exp()
    } else {
        let y = 3.75 / ax;
        (0.39894228
            + y * (0.01328592
                + y * (0.00225319
                    + y * (-0.00157565
                        + y * (0.00916281
                            + y * (-0.02057706
                                + y * (0.02635537 + y * (-0.01647633 + y * 0.00392377))))))))
            / ax.sqrt()
    }
}

/// `exp(-|x|) * I1(x)`.
pub fn i1e(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < 3.75 {
        let y = (x / 3.75).powi(2);
        let i1 = ax
            * (0.5
                + y * (0.87890594
                    + y * (0.51498869
                        + y * (0.15084934 + y * (0.02658733 + y * (0.00301532 + y * 0.00032411))))));
        i1 * (-ax).exp()
    } else {
        let y = 3.75 / ax;
        (0.39894228
            + y * (-0.03988024
                + y * (-0.00362018
                    + y * (0.00163801
                        + y * (-0.01031555
                            + y * (0.02282967
                                + y * (-0.02895312 + y * (0.01787654 - y * 0.00420059))))))))
            / ax.sqrt()
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// `I1(x) / I0(x)`.
pub fn bessel_ratio(x: f64) -> f64 {
    let d = i0e(x);
    if d <= 0.0 {
        1.0
    } else {
        i1e(x) / d
    }
}
