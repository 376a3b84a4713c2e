//! Complex Gamma function (Lanczos, g = 7) with reflection.

use num_complex::Complex64;
use std::f64::consts::PI;

const G: f64 = 7.0;
const COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(w)` for `Re w ≥ 1/2` (any branch; only used through `exp`).
fn ln_gamma_right(w: Complex64) -> Complex64 {
    let w = w - 1.0;
    let mut x = Complex64::new(COEF[0], 0.0);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += c / (w + i as f64);
    }
    let t = w + G + 0.5;
    0.5 * (2.0 * PI).ln() + (w + 0.5) * t.ln() - t + x.ln()
}

/// `Γ(w)`. Infinite at the poles `w = 0, -1, -2, ...`.
pub fn gamma(w: Complex64) -> Complex64 {
    if w.re < 0.5 {
        let s = (PI * w).sin();
        if s == Complex64::new(0.0, 0.0) {
            return Complex64::new(f64::INFINITY, 0.0);
        }
        PI / (s * ln_gamma_right(1.0 - w).exp())
    } else {
        ln_gamma_right(w).exp()
    }
}

/// `1 / Γ(w)`, entire.
pub fn rgamma(w: Complex64) -> Complex64 {
    if w.re < 0.5 {
        (PI * w).sin() * ln_gamma_right(1.0 - w).exp() / PI
    } else {
        (-ln_gamma_right(w)).exp()
    }
}
