//! Complete elliptic integrals and the nome, via the arithmetic-geometric mean.

use std::f64::consts::PI;

/// Complete elliptic integrals K(k) and E(k) for modulus 0 <= k < 1.
pub fn elliptic_ke(k: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&k), "modulus must lie in [0, 1)");
    let mut a = 1.0_f64;
    let mut b = (1.0 - k * k).sqrt();
    let mut c = k;
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..64 {
        if c.abs() < 1e-15 * a {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let kk = PI / (2.0 * a);
    (kk, kk * (1.0 - sum))
}

/// Jacobi nome exp(-pi K'/K).
pub fn nome(k: f64) -> f64 {
    let (kk, _) = elliptic_ke(k);
    let (kp, _) = elliptic_ke((1.0 - k * k).sqrt());
    (-PI * kp / kk).exp()
}
