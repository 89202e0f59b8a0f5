//! Numerical checks of the potential-kernel tables against known constants:
//! exact small-lattice values, discrete harmonicity, the log-law constant in
//! d = 2, and the inverse-distance amplitude in d = 3.

use std::f64::consts::PI;

use toppler::diagnostics::potential_kernel;

#[test]
fn d2_exact_values_and_kappa() {
    let table = potential_kernel(2, 32, 1e-6).expect("kernel");
    // a(e_1) = 1 and a(1,1) = 4/pi are exact lattice constants.
    assert!((table.a(&[1, 0]).unwrap() - 1.0).abs() < 2e-3);
    assert!((table.a(&[1, 1]).unwrap() - 4.0 / PI).abs() < 2e-3);

    // a(x) = (2/pi) ln|x| + kappa + o(1); the offset must be flat over the
    // annulus 10 <= |x| <= 30 and close to the known constant
    // (2 gamma + ln 8)/pi = 1.0294.
    let mut kappas = Vec::new();
    for x in -30i64..=30 {
        for y in -30i64..=30 {
            let r = ((x * x + y * y) as f64).sqrt();
            if (10.0..=30.0).contains(&r) {
                kappas.push(table.a(&[x, y]).unwrap() - (2.0 / PI) * r.ln());
            }
        }
    }
    let lo = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 0.01, "kappa spread {} over [{lo}, {hi}]", hi - lo);
    let mid = (hi + lo) / 2.0;
    assert!((mid - 1.0294).abs() < 0.01, "kappa estimate {mid}");
}

#[test]
fn d2_harmonicity_off_origin() {
    let table = potential_kernel(2, 32, 1e-6).expect("kernel");
    let mut worst = 0.0f64;
    for x in -20i64..=20 {
        for y in -20i64..=20 {
            if (x, y) == (0, 0) {
                continue;
            }
            worst = worst.max(table.laplacian_a(&[x, y]).unwrap().abs());
        }
    }
    assert!(worst < 1e-4, "max |Delta a| off origin = {worst}");
}

#[test]
fn d3_green_amplitude() {
    // g(x) = a_3 / |x| + O(|x|^-3) with a_3 = 3/(2 pi); checked over the
    // annulus 10 <= |x| <= 30 as a relative error.
    let table = potential_kernel(3, 30, 1e-6).expect("kernel");
    let a3 = 3.0 / (2.0 * PI);
    let mut worst = 0.0f64;
    for x in 0i64..=30 {
        for y in 0i64..=x {
            for z in 0i64..=y {
                let r = ((x * x + y * y + z * z) as f64).sqrt();
                if (10.0..=30.0).contains(&r) {
                    let val = table.g(&[x, y, z]).unwrap() * r;
                    worst = worst.max((val / a3 - 1.0).abs());
                }
            }
        }
    }
    assert!(worst < 0.05, "worst relative deviation of g * |x| from a_3: {worst}");
}
